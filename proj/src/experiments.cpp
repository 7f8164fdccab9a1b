#include "morphaeus/experiments.hpp"

#include "morphaeus/checkpoint.hpp"
#include "morphaeus/imaging.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace morphaeus::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "ood") return ExperimentKind::ood;
  if (name == "pathology") return ExperimentKind::pathology;
  if (name == "ablation") return ExperimentKind::ablation;
  if (name == "depth-sweep") return ExperimentKind::depth_sweep;
  if (name == "tails") return ExperimentKind::tails;
  throw ConfigError("unknown experiment kind '" + name + "' (expected ood, pathology, ablation, depth-sweep or tails)");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::ood: return "ood";
    case ExperimentKind::pathology: return "pathology";
    case ExperimentKind::ablation: return "ablation";
    case ExperimentKind::depth_sweep: return "depth-sweep";
    case ExperimentKind::tails: return "tails";
  }
  return "ood";
}

// --- configuration ----------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  ExperimentConfig e;
  e.source = c;
  e.kind = parse_experiment_kind(c.get_string("experiment.kind", "ood"));
  e.name = c.get_string("experiment.name", to_string(e.kind));
  e.output = c.get_path("experiment.output", "runs");
  e.score_mode = metrics::parse_score_mode(c.get_string("experiment.score_mode", "mean-abs"));
  e.heatmap_k = static_cast<int>(c.get_int("experiment.heatmap_k", 8));
  e.extractor = c.get_string("experiment.extractor", "builtin");
  e.source_run = c.get_path("experiment.source_run");

  std::vector<std::string> default_models{"morphaeus"};
  if (e.kind == ExperimentKind::depth_sweep) default_models = {"plain-ae"};
  if (e.kind == ExperimentKind::ablation) default_models = {"morphaeus", "morphaeus-no-warp", "morphaeus-no-warp-no-pl"};
  e.models = c.get_list("experiment.models", default_models);
  e.seeds.clear();
  for (int s : c.get_int_list("experiment.seeds", {static_cast<int>(c.get_int("train.seed", 0))})) {
    if (s < 0) throw ConfigError("experiment.seeds must be non-negative");
    e.seeds.push_back(static_cast<std::uint64_t>(s));
  }

  e.data_source = c.get_string("data.source", "synthetic");
  e.data_root = c.get_path("data.root");
  e.resolution = static_cast<int>(c.get_int("data.resolution", 64));
  const bool synthetic = e.data_source == "synthetic";
  e.train_class = c.get_string("data.train_class", synthetic ? "circles" : "");
  e.ood_classes = c.get_list("data.ood_classes", synthetic ? std::vector<std::string>{"squares", "crosses"}
                                                           : std::vector<std::string>{});
  e.normal_class = c.get_string("data.normal_class", "normal");
  e.abnormal_classes =
      c.get_list("data.abnormal_classes", synthetic ? std::vector<std::string>{"anomalous"} : std::vector<std::string>{});
  e.ood_samples = static_cast<int>(c.get_int("data.ood_samples", 1000));
  e.fid_samples = static_cast<int>(c.get_int("data.fid_samples", 1000));
  e.split_seed = static_cast<std::uint64_t>(c.get_int("data.split_seed", 0));

  e.synthetic.resolution = e.resolution;
  e.synthetic.n_normal = static_cast<int>(c.get_int("synthetic.n_normal", e.synthetic.n_normal));
  e.synthetic.n_anomalous = static_cast<int>(c.get_int("synthetic.n_anomalous", e.synthetic.n_anomalous));
  e.synthetic.texture_seed = static_cast<std::uint64_t>(c.get_int("synthetic.texture_seed", 7));
  e.synthetic.anomaly.radius_min = c.get_real("synthetic.radius_min", e.synthetic.anomaly.radius_min);
  e.synthetic.anomaly.radius_max = c.get_real("synthetic.radius_max", e.synthetic.anomaly.radius_max);
  e.synthetic.anomaly.intensity_delta = c.get_real("synthetic.intensity_delta", e.synthetic.anomaly.intensity_delta);
  e.synthetic_ood = static_cast<int>(c.get_int("synthetic.n_ood", 100));

  e.depths = c.get_int_list("depth_sweep.depths", {2, 4, 6});
  e.depth_filters = c.get_int_list("depth_sweep.filters", {});
  e.classifier.max_epochs = static_cast<int>(c.get_int("classifier.max_epochs", 60));
  e.classifier.min_accuracy = c.get_real("classifier.min_accuracy", synthetic ? 1.0 : 0.99);
  e.classifier_samples = static_cast<int>(c.get_int("classifier.samples_per_class", 500));
  return e;
}

namespace {

bool is_synthetic(const ExperimentConfig& cfg) { return cfg.data_source == "synthetic"; }

void require_class(const std::vector<std::string>& available, const std::string& cls, const fs::path& root) {
  if (std::find(available.begin(), available.end(), cls) == available.end()) {
    throw ConfigError("class '" + cls + "' not found under " + root.string());
  }
}

const std::vector<std::string>& ablation_rows() {
  static const std::vector<std::string> rows{"morphaeus", "morphaeus-no-warp", "morphaeus-no-warp-no-pl"};
  return rows;
}

std::vector<std::string> row_names(const ExperimentConfig& cfg) {
  if (cfg.kind == ExperimentKind::ablation) {
    return cfg.models.empty() ? ablation_rows() : cfg.models;
  }
  if (cfg.kind == ExperimentKind::depth_sweep) {
    std::vector<std::string> names;
    for (int d : cfg.depths) names.push_back("plain-ae-d" + std::to_string(d));
    return names;
  }
  return cfg.models;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("experiment.name must not be empty");
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (heatmap_k < 0) throw ConfigError("experiment.heatmap_k must be non-negative");
  if (data_source != "synthetic" && data_source != "folder") {
    throw ConfigError("data.source must be 'synthetic' or 'folder', got '" + data_source + "'");
  }
  if (ood_samples < 2 || fid_samples < 2) throw ConfigError("data.ood_samples and data.fid_samples must be >= 2");
  FeatureExtractor::from_name(extractor);

  if (kind == ExperimentKind::tails) {
    if (source_run.empty()) throw ConfigError("tails needs experiment.source_run (a finished pathology run)");
    if (!fs::exists(source_run / "report.json") || !fs::exists(source_run / "config.ini")) {
      throw ConfigError("tails: " + source_run.string() +
                        " is not a finished run; run the pathology experiment first");
    }
    return;
  }

  if (kind == ExperimentKind::ood) {
    if (train_class.empty() || ood_classes.empty()) {
      throw ConfigError("ood experiments need data.train_class and at least one data.ood_classes entry");
    }
  }
  if ((kind == ExperimentKind::pathology || kind == ExperimentKind::ablation ||
       kind == ExperimentKind::depth_sweep) && abnormal_classes.empty()) {
    throw ConfigError(to_string(kind) + " experiments need at least one data.abnormal_classes entry");
  }
  if (kind == ExperimentKind::depth_sweep) {
    if (depths.empty()) throw ConfigError("depth_sweep.depths must list at least one depth");
    for (int d : depths) {
      if (d < 1 || (1 << d) > resolution) {
        throw ConfigError("depth " + std::to_string(d) + " does not fit resolution " + std::to_string(resolution));
      }
    }
  }

  if (is_synthetic(*this)) {
    if (kind == ExperimentKind::ood) {
      data::parse_shape_kind(train_class);
    }
    if (kind == ExperimentKind::ood || kind == ExperimentKind::depth_sweep) {
      for (const auto& c : ood_classes) data::parse_shape_kind(c);
    }
    if (kind != ExperimentKind::ood) {
      if (normal_class != "normal") throw ConfigError("synthetic pathology data uses normal_class = normal");
      for (const auto& c : abnormal_classes) {
        if (c != "anomalous") throw ConfigError("synthetic pathology data has only the 'anomalous' class");
      }
    }
    if (synthetic.n_normal < 20) throw ConfigError("synthetic.n_normal must be at least 20");
    if (synthetic_ood < 2) throw ConfigError("synthetic.n_ood must be at least 2");
  } else {
    if (data_root.empty()) throw ConfigError("data.root is required for folder data");
    if (!fs::is_directory(data_root)) throw ConfigError("data.root does not exist: " + data_root.string());
    auto classes = data::list_classes(data_root);
    if (kind == ExperimentKind::ood) {
      require_class(classes, train_class, data_root);
      for (const auto& c : ood_classes) require_class(classes, c, data_root);
    } else {
      require_class(classes, normal_class, data_root);
      for (const auto& c : abnormal_classes) require_class(classes, c, data_root);
      for (const auto& c : ood_classes) require_class(classes, c, data_root);
    }
  }

  if (kind == ExperimentKind::ablation) {
    for (const auto& m : models) {
      const auto& rows = ablation_rows();
      if (std::find(rows.begin(), rows.end(), m) == rows.end()) {
        throw ConfigError("unknown ablation row '" + m +
                          "'; supported: morphaeus morphaeus-no-warp morphaeus-no-warp-no-pl");
      }
    }
    model_spec(source, ModelKind::morphaeus, resolution).morphaeus.validate();
    train_config(source, ModelKind::morphaeus).validate();
  }
  for (const auto& m : kind == ExperimentKind::ablation ? std::vector<std::string>{} : models) {
    auto kind_m = parse_model_kind(m);
    auto spec = model_spec(source, kind_m, resolution);
    if (spec.kind == ModelKind::morphaeus) spec.morphaeus.validate(); else spec.baseline.validate();
    train_config(source, kind_m).validate();
  }
}

json ExperimentConfig::plan() const {
  json p;
  p["experiment"] = name;
  p["kind"] = to_string(kind);
  p["output"] = run_dir().string();
  p["seeds"] = seeds;
  p["score_mode"] = metrics::to_string(score_mode);
  p["extractor"] = extractor;
  p["data"] = {{"source", data_source}, {"root", data_root.string()}, {"resolution", resolution}};
  if (kind == ExperimentKind::ood) {
    p["data"]["train_class"] = train_class;
    p["data"]["ood_classes"] = ood_classes;
  } else {
    p["data"]["normal_class"] = normal_class;
    p["data"]["abnormal_classes"] = abnormal_classes;
  }
  if (kind == ExperimentKind::tails) {
    p["source_run"] = source_run.string();
    return p;
  }
  p["runs"] = json::array();
  for (const auto& row : row_names(*this)) {
    ModelKind k = kind == ExperimentKind::depth_sweep ? ModelKind::plain_ae
                  : kind == ExperimentKind::ablation ? ModelKind::morphaeus
                                                     : parse_model_kind(row);
    for (auto seed : seeds) {
      p["runs"].push_back({{"model", row},
                           {"seed", seed},
                           {"train", train_config(source, k).to_json()},
                           {"directory", (run_dir() / row / ("seed_" + std::to_string(seed))).string()}});
    }
  }
  return p;
}

ModelSpec model_spec(const Config& c, ModelKind kind, int resolution) {
  ModelSpec spec;
  spec.kind = kind;
  if (kind == ModelKind::morphaeus) {
    auto m = MorphAEusConfig::for_resolution(resolution);
    m.encoder_filters = c.get_int_list("morphaeus.filters", m.encoder_filters);
    m.latent_channels = static_cast<int>(c.get_int("morphaeus.latent_channels", m.latent_channels));
    m.head_filters = static_cast<int>(c.get_int("morphaeus.head_filters", m.head_filters));
    m.alpha = c.get_real("morphaeus.alpha", m.alpha);
    m.beta_start = c.get_real("morphaeus.beta_start", m.beta_start);
    m.beta_end = c.get_real("morphaeus.beta_end", m.beta_end);
    m.max_displacement = c.get_real("morphaeus.max_displacement", m.max_displacement);
    m.lncc_window = static_cast<int>(c.get_int("morphaeus.lncc_window", m.lncc_window));
    auto smooth = c.get_string("morphaeus.smoothness", "gradient");
    if (smooth == "gradient") {
      m.smoothness = losses::SmoothnessKind::gradient;
    } else if (smooth == "magnitude") {
      m.smoothness = losses::SmoothnessKind::magnitude;
    } else {
      throw ConfigError("morphaeus.smoothness must be 'gradient' or 'magnitude'");
    }
    m.stop_warp_gradient_at_prior = c.get_bool("morphaeus.stop_warp_gradient", m.stop_warp_gradient_at_prior);
    m.use_warp = c.get_bool("morphaeus.use_warp", m.use_warp);
    m.deformation_start_epoch = static_cast<int>(c.get_int("train.deformation_start_epoch", m.deformation_start_epoch));
    spec.morphaeus = m;
  } else {
    BaselineConfig b;
    b.kind = kind;
    b.resolution = resolution;
    b.filters = c.get_int_list("baseline.filters", {});
    b.latent_dim = static_cast<int>(c.get_int("baseline.latent_dim", 0));
    b.latent_channels = static_cast<int>(c.get_int("baseline.latent_channels", b.latent_channels));
    b.noise.magnitude = c.get_real("baseline.noise_magnitude", b.noise.magnitude);
    b.noise.coarseness = static_cast<int>(c.get_int("baseline.noise_coarseness", 0));
    if (b.noise.coarseness == 0) b.noise.coarseness = std::max(1, resolution / 16);
    b.gamma = c.get_real("baseline.gamma", b.gamma);
    b.capacity_max = c.get_real("baseline.capacity_max", b.capacity_max);
    spec.baseline = b;
  }
  return spec;
}

training::TrainConfig train_config(const Config& c, ModelKind kind) {
  auto t = training::recipe(kind).train;
  t.max_epochs = static_cast<int>(c.get_int("train.max_epochs", t.max_epochs));
  t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
  t.learning_rate = c.get_real("train.learning_rate", t.learning_rate);
  t.patience = static_cast<int>(c.get_int("train.patience", t.patience));
  t.min_delta = c.get_real("train.min_delta", t.min_delta);
  t.deformation_start_epoch = static_cast<int>(c.get_int("train.deformation_start_epoch", t.deformation_start_epoch));
  t.grad_clip_norm = c.get_real("train.grad_clip_norm", t.grad_clip_norm);
  t.deterministic = c.get_bool("train.deterministic", t.deterministic);
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
  return t;
}

// --- reports ----------------------------------------------------------------------

const ModelRow& ExperimentReport::row(const std::string& model) const {
  for (const auto& r : rows) {
    if (r.model == model) return r;
  }
  throw ConfigError("report has no row '" + model + "'");
}

namespace {

json row_json(const ModelRow& r) {
  json j{{"model", r.model}, {"failed", r.failed}, {"cells", r.cells}, {"seeds", r.seeds}};
  if (!r.error.empty()) j["error"] = r.error;
  j["per_seed"] = r.per_seed;
  return j;
}

std::string csv_cell(const std::map<std::string, double>& cells, const std::string& col) {
  auto it = cells.find(col);
  if (it == cells.end()) return "";
  std::ostringstream os;
  os.precision(17);
  os << it->second;
  return os.str();
}

std::string csv_for(const std::vector<std::string>& columns, const std::vector<const ModelRow*>& rows) {
  std::ostringstream os;
  os << "model,failed";
  for (const auto& c : columns) os << "," << c;
  os << "\n";
  for (const auto* r : rows) {
    os << r->model << "," << (r->failed ? 1 : 0);
    for (const auto& c : columns) os << "," << csv_cell(r->cells, c);
    os << "\n";
  }
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

}  // namespace

json ExperimentReport::to_json() const {
  json j{{"experiment", experiment}, {"kind", to_string(kind)}, {"columns", columns}, {"provenance", provenance}};
  j["rows"] = json::array();
  for (const auto& r : rows) j["rows"].push_back(row_json(r));
  return j;
}

std::string ExperimentReport::to_csv() const {
  std::vector<const ModelRow*> ptrs;
  for (const auto& r : rows) ptrs.push_back(&r);
  return csv_for(columns, ptrs);
}

void ExperimentReport::write(const fs::path& dir) const {
  write_text(dir / "report.json", to_json().dump(2) + "\n");
  write_text(dir / "report.csv", to_csv());
  for (const auto& r : rows) {
    json j{{"experiment", experiment}, {"kind", to_string(kind)}, {"columns", columns}, {"provenance", provenance}};
    j["row"] = row_json(r);
    write_text(dir / r.model / "report.json", j.dump(2) + "\n");
    write_text(dir / r.model / "report.csv", csv_for(columns, {&r}));
  }
}

// --- shared pipeline pieces ----------------------------------------------------------

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void aggregate(ModelRow& row) {
  std::map<std::string, std::vector<double>> by_col;
  for (const auto& s : row.per_seed) {
    for (const auto& [k, v] : s) by_col[k].push_back(v);
  }
  row.cells.clear();
  for (auto& [k, v] : by_col) row.cells[k] = median(v);
}

std::vector<std::string> collect_columns(const std::vector<ModelRow>& rows, const std::vector<std::string>& preferred) {
  std::vector<std::string> cols = preferred;
  std::set<std::string> seen(preferred.begin(), preferred.end());
  for (const auto& r : rows) {
    for (const auto& [k, _] : r.cells) {
      if (seen.insert(k).second) cols.push_back(k);
    }
  }
  return cols;
}

Tensor stack_limited(const std::vector<data::Sample>& samples, std::size_t limit) {
  std::vector<std::size_t> idx(std::min(limit, samples.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return data::stack(samples, idx);
}

std::vector<std::string> ids_of(const std::vector<data::Sample>& samples) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

/// Everything a model run trains on and is evaluated against.
struct RunData {
  data::DatasetSplit train_split;             // normal-only train / val
  std::vector<data::Sample> test_normal;
  std::map<std::string, std::vector<data::Sample>> test_abnormal;  // pathology classes or OoD classes
  std::map<std::string, std::vector<Tensor>> masks;                // synthetic pathology only
  std::map<std::string, Tensor> classifier_images;                 // ood: training class + OoD classes
  std::map<std::string, std::vector<data::Sample>> far_ood;        // depth-sweep
  std::string manifest_hash;
};

RunData load_ood_data(const ExperimentConfig& cfg) {
  RunData d;
  if (is_synthetic(cfg)) {
    auto train_kind = data::parse_shape_kind(cfg.train_class);
    auto all = data::make_shapes(train_kind, cfg.synthetic.n_normal, cfg.resolution, cfg.synthetic.texture_seed);
    auto split = data::split_samples(std::move(all), cfg.resolution, cfg.split_seed);
    d.train_split = split;
    d.test_normal = split.test;
    std::uint64_t k = 1;
    for (const auto& c : cfg.ood_classes) {
      d.test_abnormal[c] =
          data::make_shapes(data::parse_shape_kind(c), cfg.synthetic_ood, cfg.resolution, cfg.synthetic.texture_seed + 1000 * k);
      ++k;
    }
    const int n_cls = std::min(cfg.classifier_samples, std::max(cfg.synthetic.n_normal, 20));
    d.classifier_images[cfg.train_class] =
        data::stack(data::make_shapes(train_kind, n_cls, cfg.resolution, cfg.synthetic.texture_seed + 77));
    k = 1;
    for (const auto& c : cfg.ood_classes) {
      d.classifier_images[c] = data::stack(
          data::make_shapes(data::parse_shape_kind(c), n_cls, cfg.resolution, cfg.synthetic.texture_seed + 77 + 1000 * k));
      ++k;
    }
  } else {
    auto split = data::load_image_folder(cfg.data_root, cfg.resolution, cfg.split_seed);
    d.train_split.resolution = split.resolution;
    d.train_split.seed = split.seed;
    d.train_split.skipped = split.skipped;
    d.train_split.train = split.train_with_label(cfg.train_class);
    d.train_split.val = split.val_with_label(cfg.train_class);
    d.test_normal = split.test_with_label(cfg.train_class);
    std::uint64_t k = 1;
    for (const auto& c : cfg.ood_classes) {
      d.test_abnormal[c] = data::sample_ood(cfg.data_root, c, cfg.ood_samples, cfg.split_seed + k, cfg.resolution);
      ++k;
    }
    for (const auto& c : data::list_classes(cfg.data_root)) {
      auto train = split.train_with_label(c);
      if (!train.empty()) d.classifier_images[c] = stack_limited(train, cfg.classifier_samples);
    }
  }
  if (d.train_split.train.empty()) throw ConfigError("training class '" + cfg.train_class + "' has no training images");
  d.manifest_hash = d.train_split.manifest_hash();
  return d;
}

RunData load_pathology_data(const ExperimentConfig& cfg) {
  RunData d;
  if (is_synthetic(cfg)) {
    auto syn = data::make_synthetic(cfg.synthetic);
    d.train_split.train = syn.split.train;
    d.train_split.val = syn.split.val;
    d.train_split.resolution = cfg.resolution;
    d.train_split.seed = syn.split.seed;
    for (std::size_t i = 0; i < syn.split.test.size(); ++i) {
      const auto& s = syn.split.test[i];
      if (s.label == "normal") {
        d.test_normal.push_back(s);
      } else {
        d.test_abnormal[s.label].push_back(s);
        d.masks[s.label].push_back(syn.masks[i]);
      }
    }
    std::uint64_t k = 1;
    for (const auto& c : cfg.ood_classes) {
      d.far_ood[c] = data::make_shapes(data::parse_shape_kind(c), cfg.synthetic_ood, cfg.resolution,
                                       cfg.synthetic.texture_seed + 1000 * k);
      ++k;
    }
  } else {
    auto split = data::load_image_folder(cfg.data_root, cfg.resolution, cfg.split_seed);
    d.train_split.resolution = split.resolution;
    d.train_split.seed = split.seed;
    d.train_split.skipped = split.skipped;
    d.train_split.train = split.train_with_label(cfg.normal_class);
    d.train_split.val = split.val_with_label(cfg.normal_class);
    d.test_normal = split.test_with_label(cfg.normal_class);
    for (const auto& c : cfg.abnormal_classes) d.test_abnormal[c] = split.test_with_label(c);
    for (const auto& c : cfg.ood_classes) d.far_ood[c] = split.test_with_label(c);
  }
  if (d.train_split.train.empty()) throw ConfigError("normal class has no training images");
  if (d.test_normal.empty()) throw ConfigError("normal class has no test images");
  for (const auto& [c, v] : d.test_abnormal) {
    if (v.empty()) throw ConfigError("abnormal class '" + c + "' has no test images");
  }
  d.manifest_hash = d.train_split.manifest_hash();
  return d;
}

json base_provenance(const ExperimentConfig& cfg, const FeatureExtractor& fx, const std::string& manifest_hash) {
  return {{"config_hash", cfg.source.hash()},
          {"manifest_hash", manifest_hash},
          {"extractor", fx.name()},
          {"extractor_hash", fx.hash()},
          {"score_mode", metrics::to_string(cfg.score_mode)},
          {"seeds", cfg.seeds},
          {"notes",
           {"MorphAEus trains with Adam, batch 16 and learning rate 5e-4 unless [train] overrides them",
            "multi-seed cells are medians over seeds"}}};
}

void prepare_run_dir(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.run_dir());
  write_text(cfg.run_dir() / "config.ini", cfg.source.dump());
  write_text(cfg.run_dir() / "plan.json", cfg.plan().dump(2) + "\n");
}

/// Loads the finished run in `dir` when it matches `spec`, else trains and checkpoints there.
ModelPtr train_or_resume(const ExperimentConfig& cfg, const fs::path& dir, const ModelSpec& spec,
                         training::TrainConfig tc, const data::DatasetSplit& split, const FeatureExtractor& fx) {
  const auto ckpt = dir / "best.ckpt";
  if (fs::exists(ckpt) && fs::exists(dir / "history.json")) {
    auto loaded = load_checkpoint(ckpt);
    if (loaded.model->spec().to_json() == spec.to_json()) {
      spdlog::info("resuming from {}", ckpt.string());
      return loaded.model;
    }
    spdlog::warn("checkpoint {} was trained with a different model spec; retraining", ckpt.string());
  }
  seed_everything(tc.seed);
  auto model = build_model(spec);
  tc.out_dir = dir;
  tc.progress = cfg.progress;
  auto result = training::train(model, split, tc, &fx);
  return result.model;
}

struct Scored {
  Tensor inputs;
  Tensor recon;
  std::vector<double> scores;
};

Scored score(AnomalyModel& model, const std::vector<data::Sample>& samples, metrics::ScoreMode mode) {
  Scored s;
  s.inputs = data::stack(samples);
  s.recon = reconstruct_all(model, s.inputs);
  s.scores = metrics::anomaly_scores(s.inputs, s.recon, mode);
  return s;
}

void write_scores(const fs::path& path, const std::vector<data::Sample>& normal, const Scored& normal_scores,
                  const std::map<std::string, std::vector<data::Sample>>& classes,
                  const std::map<std::string, Scored>& class_scores) {
  json j;
  j["normal"] = {{"ids", ids_of(normal)}, {"scores", normal_scores.scores}};
  for (const auto& [c, samples] : classes) {
    j["classes"][c] = {{"ids", ids_of(samples)}, {"scores", class_scores.at(c).scores}};
  }
  write_text(path, j.dump() + "\n");
}

void write_curves(const fs::path& dir, const std::vector<double>& normal,
                  const std::map<std::string, Scored>& class_scores) {
  std::vector<imaging::Series> roc, pr;
  for (const auto& [c, s] : class_scores) {
    auto set = metrics::ScoreSet::from(normal, s.scores);
    imaging::Series r{c, {}, {}}, p{c, {}, {}};
    for (const auto& pt : metrics::roc_curve(set)) {
      r.xs.push_back(pt.x);
      r.ys.push_back(pt.y);
    }
    for (const auto& pt : metrics::pr_curve(set)) {
      p.xs.push_back(pt.x);
      p.ys.push_back(pt.y);
    }
    roc.push_back(r);
    pr.push_back(p);
  }
  imaging::write_line_plot_svg(dir / "roc.svg", "ROC", "false positive rate", "true positive rate", roc);
  imaging::write_line_plot_svg(dir / "pr.svg", "Precision-recall", "recall", "precision", pr);
}

std::map<std::string, double> reconstruction_cells(const Scored& normal, const FeatureExtractor& fx) {
  return {{"ssim", metrics::ssim(normal.inputs, normal.recon)},
          {"perceptual_distance", metrics::perceptual_distance(normal.inputs, normal.recon, fx)}};
}

/// Highest, median and lowest scoring exemplars of one class: input, pseudo-healthy and heat map.
void write_exemplars(const fs::path& dir, const Scored& s, int k) {
  if (k <= 0) return;
  const auto n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
  const std::size_t kk = std::min<std::size_t>(k, n);
  auto emit = [&](const std::string& tag, std::size_t first) {
    for (std::size_t i = 0; i < kk && first + i < n; ++i) {
      auto idx = order[first + i];
      auto stem = tag + "_" + std::to_string(i);
      imaging::write_png(dir / (stem + "_input.png"), s.inputs[idx]);
      imaging::write_png(dir / (stem + "_pseudo_healthy.png"), s.recon[idx]);
      metrics::write_residual_heatmap(dir / (stem + "_heatmap.png"), s.inputs[idx], s.recon[idx]);
    }
  };
  emit("highest", 0);
  emit("median", n > kk ? (n - kk) / 2 : 0);
  emit("lowest", n > kk ? n - kk : 0);
}

std::pair<double, double> mask_heat(const Scored& s, const std::vector<Tensor>& masks) {
  auto heat = metrics::residual_heatmap(s.inputs, s.recon);
  auto m = torch::stack(masks);
  double inside = 0.0, outside = 0.0;
  int64_t counted = 0;
  for (int64_t i = 0; i < heat.size(0); ++i) {
    auto mi = m[i];
    auto in_px = mi.sum().item<double>();
    auto out_px = (1 - mi).sum().item<double>();
    if (in_px <= 0 || out_px <= 0) continue;
    inside += (heat[i] * mi).sum().item<double>() / in_px;
    outside += (heat[i] * (1 - mi)).sum().item<double>() / out_px;
    ++counted;
  }
  if (counted == 0) return {0.0, 0.0};
  return {inside / counted, outside / counted};
}

metrics::TrainedClassifier classifier_for(const ExperimentConfig& cfg, const RunData& d) {
  const auto path = cfg.run_dir() / "classifier.pt";
  const auto meta_path = cfg.run_dir() / "classifier.json";
  std::vector<std::string> classes;
  for (const auto& [c, _] : d.classifier_images) classes.push_back(c);
  if (fs::exists(path) && fs::exists(meta_path)) {
    json meta = json::parse(std::ifstream(meta_path));
    if (meta.at("classes").get<std::vector<std::string>>() == classes) {
      metrics::TrainedClassifier tc;
      tc.classes = classes;
      tc.holdout_accuracy = meta.at("holdout_accuracy").get<double>();
      tc.net = metrics::DomainClassifier(static_cast<int>(classes.size()));
      torch::load(tc.net, path.string());
      tc.net->eval();
      return tc;
    }
  }
  auto opts = cfg.classifier;
  opts.seed = cfg.split_seed;
  auto tc = metrics::train_domain_classifier(d.classifier_images, opts);
  torch::save(tc.net, path.string());
  write_text(meta_path, json{{"classes", tc.classes}, {"holdout_accuracy", tc.holdout_accuracy}}.dump(2) + "\n");
  return tc;
}

template <typename EvalFn>
ModelRow run_row(const ExperimentConfig& cfg, const std::string& row_name, const ModelSpec& spec,
                 const training::TrainConfig& base_tc, const RunData& d, const FeatureExtractor& fx, EvalFn&& eval) {
  ModelRow row;
  row.model = row_name;
  for (auto seed : cfg.seeds) {
    const auto dir = cfg.run_dir() / row_name / ("seed_" + std::to_string(seed));
    try {
      auto tc = base_tc;
      tc.seed = seed;
      auto model = train_or_resume(cfg, dir, spec, tc, d.train_split, fx);
      model->eval();
      row.per_seed.push_back(eval(*model, dir, seed == cfg.seeds.front()));
      row.seeds.push_back(seed);
    } catch (const std::exception& e) {
      spdlog::error("{} seed {} failed: {}", row_name, seed, e.what());
      row.failed = true;
      row.error += (row.error.empty() ? "" : "; ") + ("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  aggregate(row);
  return row;
}

ModelSpec spec_for_row(const ExperimentConfig& cfg, const std::string& row) {
  if (row == "morphaeus-no-warp" || row == "morphaeus-no-warp-no-pl") {
    auto spec = model_spec(cfg.source, ModelKind::morphaeus, cfg.resolution);
    spec.morphaeus.use_warp = false;
    if (row == "morphaeus-no-warp-no-pl") spec.morphaeus.alpha = 0.0;
    return spec;
  }
  return model_spec(cfg.source, parse_model_kind(row), cfg.resolution);
}

/// Pathology evaluation shared by run_pathology and run_ablation.
ExperimentReport pathology_like(const ExperimentConfig& cfg) {
  prepare_run_dir(cfg);
  auto fx = FeatureExtractor::from_name(cfg.extractor);
  auto d = load_pathology_data(cfg);

  ExperimentReport report;
  report.experiment = cfg.name;
  report.kind = cfg.kind;
  report.provenance = base_provenance(cfg, fx, d.manifest_hash);

  for (const auto& row_name : row_names(cfg)) {
    ModelSpec spec;
    training::TrainConfig tc;
    try {
      spec = spec_for_row(cfg, row_name);
      tc = train_config(cfg.source, spec.kind);
    } catch (const std::exception& e) {
      report.rows.push_back({row_name, true, e.what(), {}, {}, {}});
      continue;
    }
    auto eval = [&](AnomalyModel& model, const fs::path& dir, bool figures) {
      std::map<std::string, double> cells;
      auto normal = score(model, d.test_normal, cfg.score_mode);
      cells = reconstruction_cells(normal, fx);
      std::map<std::string, Scored> per_class;
      for (const auto& [c, samples] : d.test_abnormal) {
        auto s = score(model, samples, cfg.score_mode);
        auto set = metrics::ScoreSet::from(normal.scores, s.scores);
        cells["fpr95_" + c] = metrics::fpr_at_tpr(set, 0.95);
        cells["fpr99_" + c] = metrics::fpr_at_tpr(set, 0.99);
        cells["auprc_" + c] = metrics::auprc(set);
        cells["auroc_" + c] = metrics::auroc(set);
        if (d.masks.count(c)) {
          auto [inside, outside] = mask_heat(s, d.masks.at(c));
          cells["heat_inside_" + c] = inside;
          cells["heat_outside_" + c] = outside;
        }
        per_class.emplace(c, std::move(s));
      }
      write_scores(dir / "scores.json", d.test_normal, normal, d.test_abnormal, per_class);
      if (figures) {
        const auto fig = cfg.run_dir() / row_name / "figures";
        write_curves(fig, normal.scores, per_class);
        for (const auto& [c, s] : per_class) write_exemplars(fig / c, s, cfg.heatmap_k);
      }
      return cells;
    };
    report.rows.push_back(run_row(cfg, row_name, spec, tc, d, fx, eval));
  }
  std::vector<std::string> preferred{"ssim", "perceptual_distance"};
  for (const auto& c : cfg.abnormal_classes) {
    for (const char* m : {"fpr95_", "fpr99_", "auprc_", "auroc_"}) preferred.push_back(m + c);
  }
  report.columns = collect_columns(report.rows, preferred);
  report.write(cfg.run_dir());
  return report;
}

}  // namespace

// --- experiments ------------------------------------------------------------------

ExperimentReport run_ood(const ExperimentConfig& cfg) {
  cfg.validate();
  prepare_run_dir(cfg);
  auto fx = FeatureExtractor::from_name(cfg.extractor);
  auto d = load_ood_data(cfg);
  auto classifier = classifier_for(cfg, d);
  auto train_images = stack_limited(d.train_split.train, static_cast<std::size_t>(cfg.fid_samples));
  auto train_stats = metrics::feature_stats(train_images, fx);
  std::map<std::string, Tensor> ood_inputs;
  for (const auto& [c, samples] : d.test_abnormal) ood_inputs[c] = data::stack(samples);

  ExperimentReport report;
  report.experiment = cfg.name;
  report.kind = cfg.kind;
  report.provenance = base_provenance(cfg, fx, d.manifest_hash);
  report.provenance["fid_train_samples"] = train_stats.count;
  report.provenance["classifier_holdout_accuracy"] = classifier.holdout_accuracy;

  for (const auto& row_name : cfg.models) {
    ModelSpec spec;
    training::TrainConfig tc;
    try {
      spec = spec_for_row(cfg, row_name);
      tc = train_config(cfg.source, spec.kind);
    } catch (const std::exception& e) {
      report.rows.push_back({row_name, true, e.what(), {}, {}, {}});
      continue;
    }
    auto eval = [&](AnomalyModel& model, const fs::path& dir, bool figures) {
      auto normal = score(model, d.test_normal, cfg.score_mode);
      auto cells = reconstruction_cells(normal, fx);
      std::map<std::string, Scored> per_class;
      for (const auto& [c, samples] : d.test_abnormal) {
        auto s = score(model, samples, cfg.score_mode);
        cells["auroc_" + c] = metrics::auroc(metrics::ScoreSet::from(normal.scores, s.scores));
        per_class.emplace(c, std::move(s));
      }
      auto mt = metrics::manifold_test([&](const Tensor& x) { return reconstruct_all(model, x); }, train_stats,
                                       ood_inputs, fx, classifier, cfg.train_class);
      for (const auto& [c, v] : mt.fid_recon_vs_train) cells["fid_" + c] = v;
      for (const auto& [c, v] : mt.fid_input_vs_train) cells["fid_input_" + c] = v;
      cells["mean_fid"] = mt.mean_fid_recon;
      cells["mean_fid_input"] = mt.mean_fid_input;
      cells["mean_confidence"] = mt.mean_confidence;
      cells["manifold_pass"] = mt.pass ? 1.0 : 0.0;
      write_scores(dir / "scores.json", d.test_normal, normal, d.test_abnormal, per_class);
      if (figures) {
        const auto fig = cfg.run_dir() / row_name / "figures";
        write_curves(fig, normal.scores, per_class);
        for (const auto& [c, s] : per_class) write_exemplars(fig / c, s, cfg.heatmap_k);
      }
      return cells;
    };
    report.rows.push_back(run_row(cfg, row_name, spec, tc, d, fx, eval));
  }
  std::vector<std::string> preferred{"ssim", "perceptual_distance", "mean_fid", "mean_confidence", "manifold_pass"};
  for (const auto& c : cfg.ood_classes) preferred.push_back("auroc_" + c);
  report.columns = collect_columns(report.rows, preferred);
  report.write(cfg.run_dir());
  return report;
}

ExperimentReport run_pathology(const ExperimentConfig& cfg) {
  cfg.validate();
  return pathology_like(cfg);
}

ExperimentReport run_ablation(const ExperimentConfig& cfg) {
  cfg.validate();
  return pathology_like(cfg);
}

ExperimentReport run_depth_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  prepare_run_dir(cfg);
  auto fx = FeatureExtractor::from_name(cfg.extractor);
  auto d = load_pathology_data(cfg);

  ExperimentReport report;
  report.experiment = cfg.name;
  report.kind = cfg.kind;
  report.provenance = base_provenance(cfg, fx, d.manifest_hash);

  // Grid inputs: two of each kind, one row per input.
  std::vector<Tensor> grid_inputs;
  auto take = [&](const std::vector<data::Sample>& v) {
    for (std::size_t i = 0; i < std::min<std::size_t>(2, v.size()); ++i) grid_inputs.push_back(v[i].image);
  };
  take(d.test_normal);
  for (const auto& [_, v] : d.test_abnormal) take(v);
  for (const auto& [_, v] : d.far_ood) take(v);
  std::vector<std::vector<Tensor>> grid(grid_inputs.size());
  for (std::size_t i = 0; i < grid_inputs.size(); ++i) grid[i].push_back(grid_inputs[i]);

  for (int depth : cfg.depths) {
    const auto row_name = "plain-ae-d" + std::to_string(depth);
    auto spec = model_spec(cfg.source, ModelKind::plain_ae, cfg.resolution);
    spec.baseline.depth = depth;
    if (!cfg.depth_filters.empty()) {
      auto f = cfg.depth_filters;
      while (static_cast<int>(f.size()) < depth) f.push_back(f.back());
      spec.baseline.filters = f;
    }
    auto tc = train_config(cfg.source, ModelKind::plain_ae);
    auto eval = [&](AnomalyModel& model, const fs::path&, bool figures) {
      std::map<std::string, double> cells;
      auto normal = score(model, d.test_normal, cfg.score_mode);
      cells["ssim_in"] = metrics::ssim(normal.inputs, normal.recon);
      for (const auto& [c, samples] : d.test_abnormal) {
        auto s = score(model, samples, cfg.score_mode);
        cells["ssim_" + c] = metrics::ssim(s.inputs, s.recon);
        cells["auroc_" + c] = metrics::auroc(metrics::ScoreSet::from(normal.scores, s.scores));
      }
      std::vector<double> ood_ssim;
      for (const auto& [c, samples] : d.far_ood) {
        auto s = score(model, samples, cfg.score_mode);
        ood_ssim.push_back(metrics::ssim(s.inputs, s.recon));
        cells["ssim_ood_" + c] = ood_ssim.back();
        cells["auroc_ood_" + c] = metrics::auroc(metrics::ScoreSet::from(normal.scores, s.scores));
      }
      if (!ood_ssim.empty()) {
        cells["ssim_ood"] = std::accumulate(ood_ssim.begin(), ood_ssim.end(), 0.0) / ood_ssim.size();
      }
      if (figures && !grid_inputs.empty()) {
        auto recon = reconstruct_all(model, torch::stack(grid_inputs));
        for (std::size_t i = 0; i < grid_inputs.size(); ++i) grid[i].push_back(recon[i]);
      }
      return cells;
    };
    report.rows.push_back(run_row(cfg, row_name, spec, tc, d, fx, eval));
  }
  if (!grid_inputs.empty() && grid.front().size() == cfg.depths.size() + 1) {
    imaging::write_grid_png(cfg.run_dir() / "figures" / "depth_grid.png", grid);
  }
  report.columns = collect_columns(report.rows, {"ssim_in", "ssim_ood"});
  report.write(cfg.run_dir());
  return report;
}

// --- residual tails -------------------------------------------------------------

double Density::operator()(double x) const {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (double s : samples) {
    double u = (x - s) / bandwidth;
    if (u > -1.0 && u < 1.0) sum += 0.75 * (1.0 - u * u);
  }
  return sum / (static_cast<double>(samples.size()) * bandwidth);
}

Density kernel_density(const std::vector<double>& samples) {
  if (samples.size() < 2) throw ConfigError("kernel density needs at least two samples");
  Density d;
  d.samples = samples;
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / (n - 1));
  auto sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    double pos = q * (n - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = iqr > 0 ? std::min(sd, iqr / 1.34) : sd;
  // Silverman's Gaussian bandwidth rescaled to the Epanechnikov kernel's support.
  double h = std::sqrt(5.0) * 0.9 * spread * std::pow(n, -0.2);
  if (!(h > 0)) h = 1e-6 * std::max(1.0, std::abs(mean));
  d.bandwidth = h;
  return d;
}

double density_overlap(const std::vector<double>& a, const std::vector<double>& b, int grid) {
  auto pa = kernel_density(a), pb = kernel_density(b);
  const double h = std::max(pa.bandwidth, pb.bandwidth);
  const double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end())) - h;
  const double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end())) + h;
  const double h_min = std::min(pa.bandwidth, pb.bandwidth);
  const auto points = static_cast<std::size_t>(
      std::clamp(std::max<double>(grid, 40.0 * (hi - lo) / h_min), 16.0, 2e6));
  const double step = (hi - lo) / static_cast<double>(points - 1);
  double area = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    double x = lo + step * static_cast<double>(i);
    double v = std::min(pa(x), pb(x));
    if (i > 0) area += 0.5 * (prev + v) * step;
    prev = v;
  }
  return std::clamp(area, 0.0, 1.0);
}

std::vector<std::size_t> tail_exemplars(const std::vector<double>& scores) {
  if (scores.empty()) throw ConfigError("no scores to pick exemplars from");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return scores[x] < scores[y]; });
  return {order.front(), order[(order.size() - 1) / 2], order.back()};
}

ExperimentReport run_tails(const ExperimentConfig& cfg) {
  cfg.validate();
  auto src_cfg = ExperimentConfig::from_config(Config::from_file(cfg.source_run / "config.ini"));
  if (src_cfg.kind != ExperimentKind::pathology && src_cfg.kind != ExperimentKind::ablation) {
    throw ConfigError("tails needs a pathology or ablation run, " + cfg.source_run.string() + " is " +
                      to_string(src_cfg.kind));
  }
  src_cfg.output = cfg.source_run.parent_path();
  src_cfg.name = cfg.source_run.filename().string();
  prepare_run_dir(cfg);
  auto d = load_pathology_data(src_cfg);
  std::map<std::string, const data::Sample*> by_id;
  for (const auto& s : d.test_normal) by_id[s.id] = &s;
  for (const auto& [_, v] : d.test_abnormal) {
    for (const auto& s : v) by_id[s.id] = &s;
  }
  auto fx = FeatureExtractor::from_name(src_cfg.extractor);

  ExperimentReport report;
  report.experiment = cfg.name;
  report.kind = cfg.kind;
  report.provenance = base_provenance(cfg, fx, d.manifest_hash);
  report.provenance["source_run"] = cfg.source_run.string();

  const auto models = cfg.source.has("experiment.models") ? cfg.models : row_names(src_cfg);
  const auto seed = src_cfg.seeds.front();
  for (const auto& model_name : models) {
    ModelRow row;
    row.model = model_name;
    const auto run = cfg.source_run / model_name / ("seed_" + std::to_string(seed));
    if (!fs::exists(run / "scores.json") || !fs::exists(run / "best.ckpt")) {
      throw ConfigError("tails: missing " + (run / "scores.json").string() + "; run the pathology experiment for '" +
                        model_name + "' first");
    }
    json scores = json::parse(std::ifstream(run / "scores.json"));
    auto model = load_checkpoint(run / "best.ckpt").model;
    const auto fig = cfg.run_dir() / model_name / "figures";

    std::vector<imaging::Series> curves;
    std::map<std::string, double> cells;
    int exemplars = 0;
    auto add_class = [&](const std::string& label, const json& block) {
      auto ids = block.at("ids").get<std::vector<std::string>>();
      auto vals = block.at("scores").get<std::vector<double>>();
      auto density = kernel_density(vals);
      imaging::Series s{label, {}, {}};
      const double lo = *std::min_element(vals.begin(), vals.end()) - density.bandwidth;
      const double hi = *std::max_element(vals.begin(), vals.end()) + density.bandwidth;
      for (int i = 0; i < 256; ++i) {
        double x = lo + (hi - lo) * i / 255.0;
        s.xs.push_back(x);
        s.ys.push_back(density(x));
      }
      curves.push_back(s);
      const char* tags[] = {"min", "median", "max"};
      auto picks = tail_exemplars(vals);
      for (std::size_t k = 0; k < picks.size(); ++k) {
        const auto& id = ids.at(picks[k]);
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ConfigError("tails: sample '" + id + "' is not in the rebuilt dataset");
        auto x = it->second->image.unsqueeze(0);
        auto recon = pseudo_healthy(*model, x);
        auto stem = label + "_" + tags[k];
        imaging::write_png(fig / (stem + "_input.png"), x[0]);
        imaging::write_png(fig / (stem + "_pseudo_healthy.png"), recon[0]);
        metrics::write_residual_heatmap(fig / (stem + "_heatmap.png"), x[0], recon[0]);
        cells[stem + "_score"] = vals.at(picks[k]);
        ++exemplars;
      }
      return vals;
    };
    auto normal = add_class("normal", scores.at("normal"));
    for (const auto& [c, block] : scores.at("classes").items()) {
      auto abnormal = add_class(c, block);
      cells["overlap_" + c] = density_overlap(normal, abnormal);
    }
    cells["exemplars"] = exemplars;
    imaging::write_line_plot_svg(fig / "density.svg", "Residual score density", "anomaly score", "density", curves);
    row.per_seed.push_back(cells);
    row.seeds.push_back(seed);
    aggregate(row);
    report.rows.push_back(row);
  }
  report.columns = collect_columns(report.rows, {});
  report.write(cfg.run_dir());
  return report;
}

data::DatasetSplit training_split(const ExperimentConfig& cfg) {
  auto d = cfg.kind == ExperimentKind::ood ? load_ood_data(cfg) : load_pathology_data(cfg);
  auto split = d.train_split;
  split.test = d.test_normal;
  return split;
}

json evaluate_model(const ExperimentConfig& cfg, AnomalyModel& model) {
  if (model.resolution() != cfg.resolution) {
    throw ConfigError("checkpoint resolution " + std::to_string(model.resolution()) +
                      " differs from data.resolution " + std::to_string(cfg.resolution));
  }
  auto fx = FeatureExtractor::from_name(cfg.extractor);
  auto d = cfg.kind == ExperimentKind::ood ? load_ood_data(cfg) : load_pathology_data(cfg);
  model.eval();
  auto normal = score(model, d.test_normal, cfg.score_mode);
  json out;
  out["model"] = to_string(model.kind());
  out["score_mode"] = metrics::to_string(cfg.score_mode);
  out["manifest_hash"] = d.manifest_hash;
  out["extractor_hash"] = fx.hash();
  for (const auto& [k, v] : reconstruction_cells(normal, fx)) out["cells"][k] = v;
  for (const auto& [c, samples] : d.test_abnormal) {
    auto s = score(model, samples, cfg.score_mode);
    auto set = metrics::ScoreSet::from(normal.scores, s.scores);
    out["cells"]["auroc_" + c] = metrics::auroc(set);
    out["cells"]["auprc_" + c] = metrics::auprc(set);
    out["cells"]["fpr95_" + c] = metrics::fpr_at_tpr(set, 0.95);
    out["cells"]["fpr99_" + c] = metrics::fpr_at_tpr(set, 0.99);
  }
  return out;
}

ExperimentReport run(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::ood: return run_ood(cfg);
    case ExperimentKind::pathology: return run_pathology(cfg);
    case ExperimentKind::ablation: return run_ablation(cfg);
    case ExperimentKind::depth_sweep: return run_depth_sweep(cfg);
    case ExperimentKind::tails: return run_tails(cfg);
  }
  throw ConfigError("unknown experiment kind");
}

}  // namespace morphaeus::experiments
