#pragma once

#include "morphaeus/checkpoint.hpp"
#include "morphaeus/datasets.hpp"
#include "morphaeus/features.hpp"
#include "morphaeus/losses.hpp"
#include "morphaeus/models.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace morphaeus::training {

struct TrainConfig {
  int max_epochs = 1000;
  int batch_size = 16;
  double learning_rate = 5e-4;  // Adam
  int patience = 25;
  double min_delta = 1e-9;
  int deformation_start_epoch = 10;  // 0-based: epochs [0, start) train the prior only
  std::uint64_t seed = 0;
  double grad_clip_norm = 0.0;  // 0 disables
  bool deterministic = true;
  bool restore_best = true;
  bool progress = false;                // key=value lines on stdout
  std::filesystem::path out_dir;        // best.ckpt, history.csv, history.json when set

  void validate() const;
  nlohmann::json to_json() const;
};

/// Appendix training settings for one model family.
struct Recipe {
  ModelKind kind = ModelKind::morphaeus;
  TrainConfig train;
  std::string reconstruction_loss;  // "mse+perceptual", "l1", "l2", "mse"
  double alpha = 0.0;               // perceptual weight (MorphAEus)
  double beta = 0.0;                // beta-VAE beta
  double gamma = 0.0;               // beta-VAE capacity weight
  double capacity_max = 0.0;        // beta-VAE C ramp end

  nlohmann::json to_json() const;
};

Recipe recipe(ModelKind kind);
Recipe recipe(const std::string& kind);

struct LossValues {
  double total = 0.0;
  double mse = 0.0;
  double perceptual = 0.0;
  double lncc_term = 0.0;
  double smoothness = 0.0;
  std::map<std::string, double> extra;
};

struct EpochRecord {
  int epoch = 0;  // 0-based
  LossValues train;
  LossValues val;
  double beta = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::string best_checkpoint;
  bool stopped_early = false;
  nlohmann::json provenance;

  /// epoch, train_*, val_*, beta, seconds
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
};

/// Stops after `patience` consecutive epochs without an improvement larger than min_delta.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta);

  /// Records one validation value; returns true when training should stop.
  bool update(double value);
  /// Forget the best value, e.g. when the monitored objective changes definition.
  void reset();

  bool improved() const { return improved_; }
  double best() const { return best_; }
  int stale_epochs() const { return stale_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
  bool improved_ = false;
};

/// Per-epoch state handed to the objectives.
struct EpochState {
  int epoch = 0;
  int final_epoch = 0;
  int start_epoch = 10;
  double beta = 0.0;
  double capacity = 0.0;
  const FeatureExtractor* extractor = nullptr;
  std::uint64_t noise_seed = 0;
};

/// Model-specific objective (all kinds except aae, which trains in several steps).
losses::LossBreakdown objective(AnomalyModel& model, const Tensor& x, const EpochState& state);

struct TrainResult {
  ModelPtr model;  // best-validation weights restored when cfg.restore_best
  TrainHistory history;
  std::filesystem::path checkpoint;  // empty when cfg.out_dir is empty
};

/// Trains on split.train and monitors the total objective on split.val.
/// `extractor` is required for MorphAEus with alpha > 0.
TrainResult train(const ModelPtr& model, const data::DatasetSplit& split, const TrainConfig& cfg,
                  const FeatureExtractor* extractor = nullptr);

}  // namespace morphaeus::training
