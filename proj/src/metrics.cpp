#include "morphaeus/metrics.hpp"

#include "morphaeus/imaging.hpp"
#include "morphaeus/losses.hpp"

#include <spdlog/spdlog.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace morphaeus::metrics {

namespace F = torch::nn::functional;

// --- residuals -----------------------------------------------------------------

ScoreMode parse_score_mode(const std::string& name) {
  if (name == "mean-abs") return ScoreMode::mean_abs;
  if (name == "max-abs") return ScoreMode::max_abs;
  if (name == "p95-abs") return ScoreMode::p95_abs;
  throw ConfigError("unknown score mode '" + name + "' (expected mean-abs, max-abs or p95-abs)");
}

std::string to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::mean_abs: return "mean-abs";
    case ScoreMode::max_abs: return "max-abs";
    case ScoreMode::p95_abs: return "p95-abs";
  }
  return "mean-abs";
}

namespace {

double aggregate(const Tensor& residual, ScoreMode mode) {
  auto r = residual.to(torch::kDouble).flatten();
  switch (mode) {
    case ScoreMode::mean_abs: return r.mean().item<double>();
    case ScoreMode::max_abs: return r.max().item<double>();
    case ScoreMode::p95_abs: return torch::quantile(r, 0.95).item<double>();
  }
  return 0.0;
}

}  // namespace

double anomaly_score(const Tensor& x, const Tensor& recon, ScoreMode mode) {
  check_same_shape(x, recon, "anomaly_score");
  return aggregate((x - recon).abs(), mode);
}

std::vector<double> anomaly_scores(const Tensor& x, const Tensor& recon, ScoreMode mode) {
  check_same_shape(x, recon, "anomaly_scores");
  check_image_batch(x, "anomaly_scores");
  auto residual = (x - recon).abs();
  std::vector<double> out;
  out.reserve(x.size(0));
  for (int64_t i = 0; i < x.size(0); ++i) out.push_back(aggregate(residual[i], mode));
  return out;
}

Tensor residual_heatmap(const Tensor& x, const Tensor& recon) {
  check_same_shape(x, recon, "residual_heatmap");
  const bool single = x.dim() == 3;
  auto r = (single ? (x - recon).unsqueeze(0) : (x - recon)).abs();
  auto peak = r.flatten(1).amax(1).view({-1, 1, 1, 1});
  auto heat = torch::where(peak > 0, r / peak.clamp_min(1e-12), torch::zeros_like(r));
  return single ? heat.squeeze(0) : heat;
}

void write_residual_heatmap(const std::filesystem::path& path, const Tensor& x, const Tensor& recon) {
  imaging::write_heatmap_png(path, x, residual_heatmap(x, recon));
}

// --- fidelity ------------------------------------------------------------------

namespace {

Tensor gaussian_window(int size, double sigma) {
  auto coords = torch::arange(size, torch::kDouble) - (size - 1) / 2.0;
  auto g = torch::exp(-coords.pow(2) / (2 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g).view({1, 1, size, size});
}

Tensor ssim_map(const Tensor& a, const Tensor& b, int window) {
  check_same_shape(a, b, "ssim");
  auto x = (a.dim() == 3 ? a.unsqueeze(0) : a).to(torch::kDouble);
  auto y = (b.dim() == 3 ? b.unsqueeze(0) : b).to(torch::kDouble);
  check_image_batch(x, "ssim");
  const int64_t c = x.size(1);
  int w = static_cast<int>(std::min<int64_t>({window, x.size(2), x.size(3)}));
  if (w % 2 == 0) --w;
  if (w < 1) throw ShapeError("ssim: empty image");
  auto kernel = gaussian_window(w, 1.5).repeat({c, 1, 1, 1});
  auto conv = [&](const Tensor& t) { return F::conv2d(t, kernel, F::Conv2dFuncOptions().groups(c)); };

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto mu_x = conv(x), mu_y = conv(y);
  auto sxx = conv(x * x) - mu_x * mu_x;
  auto syy = conv(y * y) - mu_y * mu_y;
  auto sxy = conv(x * y) - mu_x * mu_y;
  auto num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2);
  auto den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2);
  return num / den;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, int window) { return ssim_map(a, b, window).mean().item<double>(); }

std::vector<double> ssim_per_image(const Tensor& a, const Tensor& b, int window) {
  auto m = ssim_map(a, b, window).flatten(1).mean(1).contiguous();
  return {m.data_ptr<double>(), m.data_ptr<double>() + m.numel()};
}

double perceptual_distance(const Tensor& a, const Tensor& b, const FeatureExtractor& f) {
  torch::NoGradGuard no_grad;
  return losses::perceptual_distance(a, b, f).mean().item<double>();
}

// --- Fréchet distance ----------------------------------------------------------

FeatureStats feature_stats(const Eigen::MatrixXd& features, const std::string& extractor_hash) {
  if (features.rows() < 2) throw ConfigError("feature statistics need at least 2 samples");
  FeatureStats s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  Eigen::MatrixXd centred = features.rowwise() - s.mean.transpose();
  s.covariance = (centred.transpose() * centred) / static_cast<double>(features.rows() - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  s.extractor_hash = extractor_hash;
  return s;
}

FeatureStats feature_stats(const Tensor& images, const FeatureExtractor& f, int64_t batch) {
  check_image_batch(images, "feature_stats");
  torch::NoGradGuard no_grad;
  std::vector<Tensor> chunks;
  for (int64_t i = 0; i < images.size(0); i += batch) {
    chunks.push_back(f.pooled(images.narrow(0, i, std::min(batch, images.size(0) - i))));
  }
  auto feats = torch::cat(chunks).to(torch::kDouble).contiguous();
  Eigen::MatrixXd m(feats.size(0), feats.size(1));
  auto acc = feats.accessor<double, 2>();
  for (int64_t r = 0; r < feats.size(0); ++r) {
    for (int64_t c = 0; c < feats.size(1); ++c) m(r, c) = acc[r][c];
  }
  return feature_stats(m, f.hash());
}

namespace {

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.extractor_hash != b.extractor_hash) {
    throw ConfigError("Fréchet distance between statistics from different feature extractors");
  }
  if (a.mean.size() != b.mean.size()) throw ShapeError("Fréchet distance: feature dimensions differ");
  Eigen::MatrixXd root = (a.covariance * b.covariance).sqrt();
  if (!root.allFinite()) {
    const double eps = 1e-6;
    Eigen::MatrixXd offset = eps * Eigen::MatrixXd::Identity(a.mean.size(), a.mean.size());
    root = ((a.covariance + offset) * (b.covariance + offset)).sqrt();
    if (!root.allFinite()) {
      std::ostringstream msg;
      msg << "Fréchet distance: matrix square root is not finite after a " << eps
          << " diagonal offset (condition numbers " << condition_number(a.covariance) << " and "
          << condition_number(b.covariance) << ")";
      throw RuntimeFailure(msg.str());
    }
  }
  const double d2 = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2 * root.trace();
  return std::max(0.0, d2);
}

// --- domain classifier ---------------------------------------------------------

DomainClassifierImpl::DomainClassifierImpl(int classes, int width) {
  namespace nn = torch::nn;
  nn::Sequential features;
  int in = 1;
  for (int out : {width, 2 * width, 4 * width}) {
    features->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
    features->push_back(nn::BatchNorm2d(out));
    features->push_back(nn::ReLU());
    features->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
    in = out;
  }
  features->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(1)));
  features->push_back(nn::Flatten());
  features_ = register_module("features", features);
  head_ = register_module("head", nn::Linear(4 * width, classes));
}

Tensor DomainClassifierImpl::forward(const Tensor& x) { return head_->forward(features_->forward(x)); }

int TrainedClassifier::index_of(const std::string& name) const {
  auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw ConfigError("classifier has no class '" + name + "'");
  return static_cast<int>(it - classes.begin());
}

Tensor TrainedClassifier::probabilities(const Tensor& images) const {
  check_image_batch(images, "classifier input");
  torch::NoGradGuard no_grad;
  DomainClassifier model = net;
  model->eval();
  std::vector<Tensor> parts;
  for (int64_t i = 0; i < images.size(0); i += 256) {
    parts.push_back(torch::softmax(model->forward(images.narrow(0, i, std::min<int64_t>(256, images.size(0) - i))), 1));
  }
  return torch::cat(parts).mean(0);
}

TrainedClassifier train_domain_classifier(const std::map<std::string, Tensor>& images_by_class,
                                          const ClassifierOptions& opt) {
  if (images_by_class.size() < 2) throw ConfigError("domain classifier needs at least two classes");
  torch::manual_seed(opt.seed);
  std::mt19937_64 rng(opt.seed);

  TrainedClassifier out;
  std::vector<Tensor> train_x, hold_x;
  std::vector<int64_t> train_y, hold_y;
  int label = 0;
  for (const auto& [name, images] : images_by_class) {
    check_image_batch(images, "classifier training images");
    if (images.size(0) < 2) throw ConfigError("class '" + name + "' needs at least two images");
    out.classes.push_back(name);
    std::vector<int64_t> idx(images.size(0));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_hold = std::max<int64_t>(1, static_cast<int64_t>(opt.holdout_fraction * images.size(0)));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      bool hold = static_cast<int64_t>(i) < n_hold;
      (hold ? hold_x : train_x).push_back(images[idx[i]]);
      (hold ? hold_y : train_y).push_back(label);
    }
    ++label;
  }
  auto x_train = torch::stack(train_x), x_hold = torch::stack(hold_x);
  auto y_train = torch::tensor(train_y), y_hold = torch::tensor(hold_y);

  out.net = DomainClassifier(static_cast<int>(out.classes.size()));
  torch::optim::Adam optimizer(out.net->parameters(), torch::optim::AdamOptions(opt.learning_rate));
  const int64_t n = x_train.size(0);
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    out.net->train();
    auto perm = torch::randperm(n);
    double loss_sum = 0.0;
    for (int64_t i = 0; i < n; i += opt.batch_size) {
      auto idx = perm.narrow(0, i, std::min<int64_t>(opt.batch_size, n - i));
      auto loss = F::cross_entropy(out.net->forward(x_train.index_select(0, idx)), y_train.index_select(0, idx));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>() * idx.size(0);
    }
    out.net->eval();
    {
      torch::NoGradGuard no_grad;
      auto pred = out.net->forward(x_hold).argmax(1);
      out.holdout_accuracy = pred.eq(y_hold).to(torch::kDouble).mean().item<double>();
    }
    spdlog::debug("classifier epoch {} loss={:.5f} holdout_accuracy={:.4f}", epoch, loss_sum / n,
                  out.holdout_accuracy);
    if (out.holdout_accuracy >= 1.0 && loss_sum / n < 0.01) break;
  }
  if (out.holdout_accuracy < opt.min_accuracy) {
    throw RuntimeFailure("domain classifier reached " + std::to_string(out.holdout_accuracy) +
                         " held-out accuracy, below the required " + std::to_string(opt.min_accuracy) +
                         "; increase max_epochs or classifier width");
  }
  return out;
}

double confidence(const TrainedClassifier& classifier, const Tensor& images, const std::string& target) {
  return classifier.probabilities(images)[classifier.index_of(target)].item<double>();
}

// --- ranking ------------------------------------------------------------------

void ScoreSet::validate() const {
  if (scores.size() != labels.size()) throw ShapeError("score set: scores and labels differ in length");
  for (int l : labels) {
    if (l != 0 && l != 1) throw ConfigError("score set: labels must be 0 or 1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ConfigError("score set: non-finite score");
  }
  if (positives() == 0 || negatives() == 0) {
    throw ConfigError("ranking metrics need both normal and anomalous samples");
  }
}

std::size_t ScoreSet::positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
std::size_t ScoreSet::negatives() const { return labels.size() - positives(); }

ScoreSet ScoreSet::from(const std::vector<double>& normal, const std::vector<double>& anomalous) {
  ScoreSet s;
  s.scores = normal;
  s.scores.insert(s.scores.end(), anomalous.begin(), anomalous.end());
  s.labels.assign(normal.size(), 0);
  s.labels.insert(s.labels.end(), anomalous.size(), 1);
  return s;
}

namespace {

/// Cumulative (tp, fp) after each group of tied scores, highest scores first.
struct Sweep {
  std::vector<std::size_t> tp, fp;
};

Sweep sweep_descending(const ScoreSet& s) {
  std::vector<std::size_t> order(s.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
  Sweep out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) {
      (s.labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    out.tp.push_back(tp);
    out.fp.push_back(fp);
    i = j;
  }
  return out;
}

}  // namespace

double auroc(const ScoreSet& s) {
  s.validate();
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] < s.scores[b]; });
  // Mann-Whitney U from mid-ranks.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (s.labels[order[k]] == 1) rank_sum += mid_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(s.positives()), q = static_cast<double>(s.negatives());
  return (rank_sum - p * (p + 1) / 2.0) / (p * q);
}

double auprc(const ScoreSet& s) {
  s.validate();
  const auto sw = sweep_descending(s);
  const double p = static_cast<double>(s.positives());
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < sw.tp.size(); ++k) {
    const double recall = static_cast<double>(sw.tp[k]) / p;
    const double precision = static_cast<double>(sw.tp[k]) / static_cast<double>(sw.tp[k] + sw.fp[k]);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double fpr_at_tpr(const ScoreSet& s, double tpr) {
  s.validate();
  if (!(tpr > 0.0 && tpr <= 1.0)) throw ConfigError("target TPR must be in (0, 1]");
  const auto sw = sweep_descending(s);
  const double p = static_cast<double>(s.positives()), q = static_cast<double>(s.negatives());
  for (std::size_t k = 0; k < sw.tp.size(); ++k) {
    if (static_cast<double>(sw.tp[k]) / p >= tpr) return static_cast<double>(sw.fp[k]) / q;
  }
  return 1.0;
}

std::vector<CurvePoint> roc_curve(const ScoreSet& s) {
  s.validate();
  const auto sw = sweep_descending(s);
  const double p = static_cast<double>(s.positives()), q = static_cast<double>(s.negatives());
  std::vector<CurvePoint> pts{{0.0, 0.0}};
  for (std::size_t k = 0; k < sw.tp.size(); ++k) pts.push_back({sw.fp[k] / q, sw.tp[k] / p});
  return pts;
}

std::vector<CurvePoint> pr_curve(const ScoreSet& s) {
  s.validate();
  const auto sw = sweep_descending(s);
  const double p = static_cast<double>(s.positives());
  std::vector<CurvePoint> pts{{0.0, 1.0}};
  for (std::size_t k = 0; k < sw.tp.size(); ++k) {
    pts.push_back({sw.tp[k] / p, static_cast<double>(sw.tp[k]) / static_cast<double>(sw.tp[k] + sw.fp[k])});
  }
  return pts;
}

// --- manifold test --------------------------------------------------------------

ManifoldTestResult manifold_test(const Reconstructor& reconstruct, const FeatureStats& train_stats,
                                 const std::map<std::string, Tensor>& ood_images, const FeatureExtractor& f,
                                 const TrainedClassifier& classifier, const std::string& training_class) {
  if (ood_images.empty()) throw ConfigError("manifold test needs at least one OoD class");
  const int train_index = classifier.index_of(training_class);
  ManifoldTestResult r;
  Tensor prob_sum;
  int64_t total = 0;
  for (const auto& [name, images] : ood_images) {
    check_image_batch(images, "manifold test images");
    if (images.size(0) < 2) throw ConfigError("manifold test: class '" + name + "' has fewer than 2 samples");
    if (images.size(0) < 50) {
      spdlog::warn("manifold test: class '{}' has only {} samples; FID estimates will be noisy", name,
                   images.size(0));
    }
    Tensor recon;
    {
      torch::NoGradGuard no_grad;
      recon = reconstruct(images);
    }
    check_same_shape(images, recon, "manifold test reconstruction");
    r.fid_input_vs_train[name] = frechet_distance(feature_stats(images, f), train_stats);
    r.fid_recon_vs_train[name] = frechet_distance(feature_stats(recon, f), train_stats);
    auto probs = classifier.probabilities(recon) * static_cast<double>(images.size(0));
    prob_sum = prob_sum.defined() ? prob_sum + probs : probs;
    total += images.size(0);
  }
  for (const auto& [name, v] : r.fid_recon_vs_train) {
    r.mean_fid_recon += v / static_cast<double>(ood_images.size());
    r.mean_fid_input += r.fid_input_vs_train[name] / static_cast<double>(ood_images.size());
  }
  auto mean_probs = prob_sum / static_cast<double>(total);
  r.mean_confidence = mean_probs[train_index].item<double>();
  r.predicted_class = classifier.classes[mean_probs.argmax().item<int64_t>()];
  r.pass = r.mean_fid_recon <= 0.95 * r.mean_fid_input && r.predicted_class == training_class;
  return r;
}

}  // namespace morphaeus::metrics
