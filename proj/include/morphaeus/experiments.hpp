#pragma once

#include "morphaeus/config.hpp"
#include "morphaeus/datasets.hpp"
#include "morphaeus/metrics.hpp"
#include "morphaeus/models.hpp"
#include "morphaeus/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace morphaeus::experiments {

enum class ExperimentKind { ood, pathology, ablation, depth_sweep, tails };
ExperimentKind parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::ood;
  std::string name;
  std::filesystem::path output = "runs";
  std::vector<std::string> models;
  std::vector<std::uint64_t> seeds{0};
  metrics::ScoreMode score_mode = metrics::ScoreMode::mean_abs;
  int heatmap_k = 8;
  std::string extractor = "builtin";
  std::filesystem::path source_run;  // tails: directory of a finished pathology run

  std::string data_source = "synthetic";  // "synthetic" or "folder"
  std::filesystem::path data_root;
  int resolution = 64;
  std::string train_class;                    // ood
  std::vector<std::string> ood_classes;       // ood, depth-sweep far-OoD inputs
  std::string normal_class = "normal";        // pathology
  std::vector<std::string> abnormal_classes;  // pathology
  int ood_samples = 1000;
  int fid_samples = 1000;
  std::uint64_t split_seed = 0;
  data::SyntheticSpec synthetic;
  int synthetic_ood = 100;

  std::vector<int> depths;         // depth-sweep
  std::vector<int> depth_filters;  // depth-sweep plain AE widths (one per stage, extended with the last)
  metrics::ClassifierOptions classifier;
  int classifier_samples = 500;

  bool progress = false;  // per-epoch key=value lines on stdout

  Config source;  // resolved configuration, for model and training settings

  static ExperimentConfig from_config(const Config& cfg);
  /// Fail-fast checks: model kinds, dataset paths and classes, extractor weights, prior runs.
  void validate() const;
  std::filesystem::path run_dir() const { return output / name; }
  /// Resolved plan: what would be trained and evaluated, and where results go.
  nlohmann::json plan() const;
};

/// Model spec for `kind` with the [morphaeus] / [baseline] settings applied.
ModelSpec model_spec(const Config& cfg, ModelKind kind, int resolution);
/// Appendix recipe for `kind` with explicit [train] keys applied on top.
training::TrainConfig train_config(const Config& cfg, ModelKind kind);

struct ModelRow {
  std::string model;
  bool failed = false;
  std::string error;
  std::map<std::string, double> cells;                   // median over seeds
  std::vector<std::map<std::string, double>> per_seed;   // in seed order
  std::vector<std::uint64_t> seeds;
};

struct ExperimentReport {
  std::string experiment;
  ExperimentKind kind = ExperimentKind::ood;
  std::vector<std::string> columns;
  std::vector<ModelRow> rows;
  nlohmann::json provenance;

  const ModelRow& row(const std::string& model) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
  /// `<dir>/report.json|csv` plus one `<dir>/<model>/report.json|csv` per row.
  void write(const std::filesystem::path& dir) const;
};

ExperimentReport run_ood(const ExperimentConfig& cfg);
ExperimentReport run_pathology(const ExperimentConfig& cfg);
ExperimentReport run_ablation(const ExperimentConfig& cfg);
ExperimentReport run_depth_sweep(const ExperimentConfig& cfg);

// --- residual tails -------------------------------------------------------------

/// Epanechnikov kernel density estimate with Silverman's bandwidth.
struct Density {
  std::vector<double> samples;
  double bandwidth = 0.0;
  double operator()(double x) const;
};
Density kernel_density(const std::vector<double>& samples);

/// Area under min(p, q) of the two densities (0 = disjoint, 1 = identical).
double density_overlap(const std::vector<double>& a, const std::vector<double>& b, int grid = 4096);

/// Index of the minimum, median and maximum score.
std::vector<std::size_t> tail_exemplars(const std::vector<double>& scores);

ExperimentReport run_tails(const ExperimentConfig& cfg);

/// Normal-class train / val / test split the configured experiment trains on.
data::DatasetSplit training_split(const ExperimentConfig& cfg);

/// SSIM and perceptual distance on normal test images plus AUROC, AUPRC and FPR95/99 per
/// abnormal (pathology) or OoD class, for an already trained model.
nlohmann::json evaluate_model(const ExperimentConfig& cfg, AnomalyModel& model);

/// Dispatches on cfg.kind.
ExperimentReport run(const ExperimentConfig& cfg);

}  // namespace morphaeus::experiments
