#pragma once

#include "morphaeus/common.hpp"
#include "morphaeus/features.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace morphaeus::metrics {

// --- residuals -----------------------------------------------------------------

enum class ScoreMode { mean_abs, max_abs, p95_abs };
ScoreMode parse_score_mode(const std::string& name);
std::string to_string(ScoreMode mode);

/// Aggregated |x - recon| of one image (any shape).
double anomaly_score(const Tensor& x, const Tensor& recon, ScoreMode mode = ScoreMode::mean_abs);
/// One score per image of an [N, C, H, W] batch.
std::vector<double> anomaly_scores(const Tensor& x, const Tensor& recon, ScoreMode mode = ScoreMode::mean_abs);

/// |x - recon| scaled to [0, 1] per image; all-zero where the residual is flat zero.
Tensor residual_heatmap(const Tensor& x, const Tensor& recon);
/// Colour-mapped residual over the [1, H, W] input, as PNG.
void write_residual_heatmap(const std::filesystem::path& path, const Tensor& x, const Tensor& recon);

// --- fidelity ------------------------------------------------------------------

/// Mean SSIM with an 11-tap Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, data
/// range 1, over the valid region. The window shrinks for images smaller than it.
double ssim(const Tensor& a, const Tensor& b, int window = 11);
/// SSIM of each image pair in [N, C, H, W] batches.
std::vector<double> ssim_per_image(const Tensor& a, const Tensor& b, int window = 11);

/// Mean perceptual distance over the batch (channel-normalized features).
double perceptual_distance(const Tensor& a, const Tensor& b, const FeatureExtractor& f);

// --- Fréchet distance ----------------------------------------------------------

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;
  std::string extractor_hash;
};

/// Sample mean and unbiased covariance of the pooled features.
FeatureStats feature_stats(const Tensor& images, const FeatureExtractor& f, int64_t batch = 64);
FeatureStats feature_stats(const Eigen::MatrixXd& features, const std::string& extractor_hash);

/// ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^(1/2)), clamped at 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// --- domain classifier ---------------------------------------------------------

class DomainClassifierImpl : public torch::nn::Module {
 public:
  DomainClassifierImpl(int classes, int width = 16);
  Tensor forward(const Tensor& x);  // logits [N, classes]

 private:
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(DomainClassifier);

struct ClassifierOptions {
  int max_epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.2;
  double min_accuracy = 0.99;
  std::uint64_t seed = 0;
};

struct TrainedClassifier {
  DomainClassifier net{nullptr};
  std::vector<std::string> classes;
  double holdout_accuracy = 0.0;

  int index_of(const std::string& name) const;
  /// Mean softmax probability over [N, ...] (eval mode).
  Tensor probabilities(const Tensor& images) const;
};

/// Trains on per-class image batches; throws RuntimeFailure when held-out accuracy stays
/// below the floor after max_epochs.
TrainedClassifier train_domain_classifier(const std::map<std::string, Tensor>& images_by_class,
                                          const ClassifierOptions& opt = {});

/// Mean softmax probability of `target` over the images, in [0, 1].
double confidence(const TrainedClassifier& classifier, const Tensor& images, const std::string& target);

// --- ranking ------------------------------------------------------------------

struct ScoreSet {
  std::vector<double> scores;  // higher = more anomalous
  std::vector<int> labels;     // 0 normal, 1 anomalous

  void validate() const;  // equal lengths, binary labels, both classes present
  std::size_t positives() const;
  std::size_t negatives() const;

  static ScoreSet from(const std::vector<double>& normal, const std::vector<double>& anomalous);
};

/// Probability that an anomalous score exceeds a normal one; ties count 1/2.
double auroc(const ScoreSet& s);
/// Average precision: sum over thresholds of (R_k - R_{k-1}) P_k, predicting score >= t.
double auprc(const ScoreSet& s);
/// Smallest FPR over thresholds (score >= t) whose TPR is at least `tpr`.
double fpr_at_tpr(const ScoreSet& s, double tpr);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};
std::vector<CurvePoint> roc_curve(const ScoreSet& s);  // (FPR, TPR), from (0,0) to (1,1)
std::vector<CurvePoint> pr_curve(const ScoreSet& s);   // (recall, precision)

// --- manifold test --------------------------------------------------------------

struct ManifoldTestResult {
  std::map<std::string, double> fid_recon_vs_train;
  std::map<std::string, double> fid_input_vs_train;
  double mean_fid_recon = 0.0;
  double mean_fid_input = 0.0;
  double mean_confidence = 0.0;  // training-class confidence on all reconstructions
  std::string predicted_class;   // argmax of the mean softmax over all reconstructions
  bool pass = false;
};

using Reconstructor = std::function<Tensor(const Tensor&)>;

/// FID of OoD reconstructions and of raw OoD inputs against the training statistics, plus
/// classifier confidence. Passes when the mean reconstruction FID is at most 95% of the
/// mean input FID and the classifier's top mean class is the training class.
ManifoldTestResult manifold_test(const Reconstructor& reconstruct, const FeatureStats& train_stats,
                                 const std::map<std::string, Tensor>& ood_images, const FeatureExtractor& f,
                                 const TrainedClassifier& classifier, const std::string& training_class);

}  // namespace morphaeus::metrics
