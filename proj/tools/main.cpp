#include "morphaeus/checkpoint.hpp"
#include "morphaeus/config.hpp"
#include "morphaeus/datasets.hpp"
#include "morphaeus/experiments.hpp"
#include "morphaeus/imaging.hpp"
#include "morphaeus/metrics.hpp"
#include "morphaeus/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace morphaeus;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  bool dry_run = false;
};

Config load_config(const Common& c) {
  Config cfg = c.config.empty() ? Config::from_string("", "<defaults>") : Config::from_file(c.config);
  cfg.apply_overrides(c.overrides);
  return cfg;
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

int cmd_prepare_data(const Common& c, const std::string& root, int resolution, std::uint64_t seed,
                     const std::string& out) {
  if (c.dry_run) {
    if (!fs::is_directory(root)) throw ConfigError("dataset root does not exist: " + root);
    print_json({{"command", "prepare-data"},
                {"root", root},
                {"classes", data::list_classes(root)},
                {"resolution", resolution},
                {"seed", seed},
                {"manifest", out}});
    return 0;
  }
  auto split = data::load_image_folder(root, resolution, seed);
  split.write_manifest(out);
  std::cout << "event=prepared train=" << split.train.size() << " val=" << split.val.size()
            << " test=" << split.test.size() << " skipped=" << split.skipped.size()
            << " manifest_hash=" << split.manifest_hash() << std::endl;
  return 0;
}

int cmd_make_synthetic(const Common& c, const std::string& kind, const std::string& out, int resolution, int n_normal,
                       int n_anomalous, std::uint64_t seed) {
  if (kind != "pathology" && kind != "shapes") throw ConfigError("--kind must be 'pathology' or 'shapes'");
  if (c.dry_run) {
    print_json({{"command", "make-synthetic"},
                {"kind", kind},
                {"out", out},
                {"resolution", resolution},
                {"n_normal", n_normal},
                {"n_anomalous", n_anomalous},
                {"seed", seed}});
    return 0;
  }
  if (kind == "pathology") {
    data::SyntheticSpec spec;
    spec.resolution = resolution;
    spec.n_normal = n_normal;
    spec.n_anomalous = n_anomalous;
    spec.texture_seed = seed;
    data::write_synthetic(data::make_synthetic(spec), out);
  } else {
    std::uint64_t k = 0;
    for (auto shape : {data::ShapeKind::circles, data::ShapeKind::squares, data::ShapeKind::crosses}) {
      data::write_samples(data::make_shapes(shape, n_normal, resolution, seed + 1000 * k++), out);
    }
  }
  std::cout << "event=synthetic kind=" << kind << " out=" << out << std::endl;
  return 0;
}

int cmd_train(const Common& c, const std::string& model_override, const std::string& out_override) {
  Config cfg = load_config(c);
  if (!model_override.empty()) cfg.set("train.model", model_override);
  if (!out_override.empty()) cfg.set("train.output", out_override);
  auto exp = experiments::ExperimentConfig::from_config(cfg);
  if (exp.kind == experiments::ExperimentKind::tails) throw ConfigError("train needs an ood or pathology data setup");
  auto kind = parse_model_kind(cfg.get_string("train.model", "morphaeus"));
  auto spec = experiments::model_spec(cfg, kind, exp.resolution);
  auto tc = experiments::train_config(cfg, kind);
  tc.out_dir = cfg.get_path("train.output", exp.run_dir() / to_string(kind));
  tc.progress = true;
  if (spec.kind == ModelKind::morphaeus) spec.morphaeus.validate(); else spec.baseline.validate();
  tc.validate();
  auto fx = FeatureExtractor::from_name(exp.extractor);
  if (c.dry_run) {
    print_json({{"command", "train"},
                {"model", spec.to_json()},
                {"train", tc.to_json()},
                {"output", tc.out_dir.string()},
                {"extractor", fx.name()},
                {"config_hash", cfg.hash()}});
    return 0;
  }
  auto split = experiments::training_split(exp);
  seed_everything(tc.seed);
  auto model = build_model(spec);
  auto result = training::train(model, split, tc, &fx);
  std::cout << "event=trained model=" << to_string(kind) << " best_epoch=" << result.history.best_epoch
            << " best_val_loss=" << result.history.best_val_loss << " checkpoint=" << result.checkpoint.string()
            << std::endl;
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, const std::string& out) {
  Config cfg = load_config(c);
  auto exp = experiments::ExperimentConfig::from_config(cfg);
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint);
  if (c.dry_run) {
    print_json({{"command", "evaluate"}, {"checkpoint", checkpoint}, {"plan", exp.plan()}, {"out", out}});
    return 0;
  }
  auto ck = load_checkpoint(checkpoint);
  auto result = experiments::evaluate_model(exp, *ck.model);
  result["checkpoint"] = checkpoint;
  result["config_hash"] = cfg.hash();
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    std::ofstream(out) << result.dump(2) << "\n";
  }
  print_json(result);
  return 0;
}

int cmd_run_experiment(const Common& c) {
  Config cfg = load_config(c);
  auto exp = experiments::ExperimentConfig::from_config(cfg);
  exp.validate();
  if (c.dry_run) {
    print_json(exp.plan());
    return 0;
  }
  exp.progress = true;
  auto report = experiments::run(exp);
  std::cout << report.to_csv();
  bool any_failed = false;
  for (const auto& r : report.rows) any_failed = any_failed || r.failed;
  return any_failed ? kExitRuntime : 0;
}

std::vector<fs::path> input_images(const fs::path& input) {
  if (!fs::exists(input)) throw ConfigError("input not found: " + input.string());
  if (!fs::is_directory(input)) return {input};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_synthesize(const Common& c, const std::string& checkpoint, const std::string& input, const std::string& out) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint);
  auto files = input_images(input);
  if (c.dry_run) {
    json plan{{"command", "synthesize"}, {"checkpoint", checkpoint}, {"out", out}, {"inputs", json::array()}};
    for (const auto& f : files) plan["inputs"].push_back(f.string());
    print_json(plan);
    return 0;
  }
  auto ck = load_checkpoint(checkpoint);
  for (const auto& f : files) {
    auto x = imaging::read_grayscale(f, ck.model->resolution()).unsqueeze(0);
    auto recon = pseudo_healthy(*ck.model, x);
    auto stem = f.stem().string();
    auto healthy_path = fs::path(out) / (stem + "_pseudo_healthy.png");
    auto heat_path = fs::path(out) / (stem + "_heatmap.png");
    imaging::write_png(healthy_path, recon[0]);
    metrics::write_residual_heatmap(heat_path, x[0], recon[0]);
    std::cout << "event=synthesized input=" << f.string() << " score=" << metrics::anomaly_score(x, recon)
              << " pseudo_healthy=" << healthy_path.string() << " heatmap=" << heat_path.string() << std::endl;
  }
  return 0;
}

int cmd_report(const std::string& run) {
  auto path = fs::path(run) / "report.json";
  if (!fs::exists(path)) throw ConfigError("no report.json under " + run);
  json j = json::parse(std::ifstream(path));
  auto columns = j.at("columns").get<std::vector<std::string>>();
  std::cout << "| model |";
  for (const auto& col : columns) std::cout << " " << col << " |";
  std::cout << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) std::cout << "---|";
  std::cout << "\n";
  for (const auto& row : j.at("rows")) {
    std::cout << "| " << row.at("model").get<std::string>() << (row.at("failed").get<bool>() ? " (failed)" : "")
              << " |";
    for (const auto& col : columns) {
      std::cout << " ";
      if (row.at("cells").contains(col)) std::cout << row.at("cells").at(col).get<double>();
      std::cout << " |";
    }
    std::cout << "\n";
  }
  return 0;
}

void add_common(CLI::App* app, Common& c, bool with_config) {
  if (with_config) {
    app->add_option("--config,-c", c.config, "Configuration file (INI)");
    app->add_option("overrides", c.overrides, "section.key=value overrides applied after the file");
  }
  app->add_flag("--dry-run", c.dry_run, "Validate and print the resolved plan without writing anything");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly detection by deformable auto-encoding: data, training, evaluation and experiments"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "More logging on standard error (repeatable)");

  Common common;
  std::string root, out, kind = "pathology", checkpoint, input, model, run;
  int resolution = 64, n_normal = 200, n_anomalous = 50;
  std::uint64_t seed = 0;

  auto* prepare = app.add_subcommand("prepare-data", "Split an image-folder dataset and write its manifest");
  prepare->add_option("--root", root, "Dataset root with one directory per class")->required();
  prepare->add_option("--resolution", resolution, "Square image size");
  prepare->add_option("--seed", seed, "Split seed");
  prepare->add_option("--out", out, "Manifest path")->required();
  add_common(prepare, common, false);

  auto* synth = app.add_subcommand("make-synthetic", "Generate a synthetic dataset in folder layout");
  synth->add_option("--kind", kind, "pathology (normal/anomalous scenes with masks) or shapes");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--resolution", resolution, "Square image size");
  synth->add_option("--n-normal", n_normal, "Normal images (per class for shapes)");
  synth->add_option("--n-anomalous", n_anomalous, "Anomalous images");
  synth->add_option("--seed", seed, "Generator seed");
  add_common(synth, common, false);

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--model", model, "Model kind (overrides train.model)");
  train->add_option("--out", out, "Output directory (overrides train.output)");
  add_common(train, common, true);

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the configured test data");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--out", out, "Write the metrics JSON here");
  add_common(evaluate, common, true);

  auto* experiment = app.add_subcommand("run-experiment", "Run a configured experiment end to end");
  add_common(experiment, common, true);

  auto* synthesize = app.add_subcommand("synthesize", "Write pseudo-healthy reconstructions and residual heat maps");
  synthesize->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  synthesize->add_option("--input", input, "Image file or directory")->required();
  synthesize->add_option("--out", out, "Output directory")->required();
  add_common(synthesize, common, false);

  auto* report = app.add_subcommand("report", "Print the report table of a finished run");
  report->add_option("--run", run, "Run directory (<output>/<experiment>)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  auto logger = spdlog::stderr_color_mt("morphaeus");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbosity >= 2 ? spdlog::level::debug : verbosity == 1 ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*prepare) return cmd_prepare_data(common, root, resolution, seed, out);
    if (*synth) return cmd_make_synthetic(common, kind, out, resolution, n_normal, n_anomalous, seed);
    if (*train) return cmd_train(common, model, out);
    if (*evaluate) return cmd_evaluate(common, checkpoint, out);
    if (*experiment) return cmd_run_experiment(common);
    if (*synthesize) return cmd_synthesize(common, checkpoint, input, out);
    if (*report) return cmd_report(run);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
