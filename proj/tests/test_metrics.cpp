#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#undef CHECK  // torch defines a glog-style CHECK
#include <doctest.h>

#include "morphaeus/datasets.hpp"
#include "morphaeus/metrics.hpp"
#include "oracles.hpp"

#include <fstream>
#include <random>

using namespace morphaeus;
using namespace morphaeus::metrics;
namespace fs = std::filesystem;
using torch::Tensor;

namespace {

ScoreSet random_scores(std::mt19937& rng, std::size_t n) {
  std::uniform_int_distribution<int> level(0, 12);  // coarse values force ties
  std::bernoulli_distribution positive(0.4);
  ScoreSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(level(rng) / 4.0);
    s.labels.push_back(positive(rng) ? 1 : 0);
  }
  s.labels[0] = 0;
  s.labels[1] = 1;
  return s;
}

Eigen::MatrixXd random_spd(std::mt19937& rng, int n) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
}

FeatureStats stats(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  FeatureStats s;
  s.mean = std::move(mean);
  s.covariance = std::move(cov);
  s.count = 100;
  s.extractor_hash = "h";
  return s;
}

}  // namespace

TEST_CASE("anomaly score modes") {
  auto x = torch::rand({1, 9, 11});
  auto r = torch::rand({1, 9, 11});
  auto res = (x - r).abs().flatten().to(torch::kDouble);
  std::vector<double> v(res.data_ptr<double>(), res.data_ptr<double>() + res.numel());
  std::sort(v.begin(), v.end());
  const double pos = 0.95 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double p95 = v[lo] + (pos - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);

  CHECK(anomaly_score(x, r, ScoreMode::mean_abs) == doctest::Approx(res.mean().item<double>()));
  CHECK(anomaly_score(x, r, ScoreMode::max_abs) == v.back());
  CHECK(anomaly_score(x, r, ScoreMode::p95_abs) == doctest::Approx(p95).epsilon(1e-12));

  auto batch = torch::rand({3, 1, 5, 5});
  auto scores = anomaly_scores(batch, torch::zeros_like(batch), ScoreMode::max_abs);
  REQUIRE(scores.size() == 3);
  CHECK(scores[1] == batch[1].max().item<double>());
  CHECK(parse_score_mode("p95-abs") == ScoreMode::p95_abs);
  CHECK_THROWS_AS(parse_score_mode("median"), ConfigError);
}

TEST_CASE("residual heatmap is normalized per image") {
  auto x = torch::rand({2, 1, 6, 6});
  auto heat = residual_heatmap(x, x * 0.5);
  CHECK(heat.max().item<double>() == doctest::Approx(1.0));
  CHECK(heat.min().item<double>() >= 0.0);
  CHECK(residual_heatmap(x, x).abs().max().item<double>() == 0.0);
}

TEST_CASE("SSIM matches the window-by-window oracle") {
  torch::manual_seed(1);
  auto a = torch::rand({1, 1, 20, 18});
  auto b = (a + 0.2 * torch::randn({1, 1, 20, 18})).clamp(0, 1);
  CHECK(ssim(a, b) == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-10));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  auto small = torch::rand({1, 1, 8, 8});
  auto small_b = torch::rand({1, 1, 8, 8});
  CHECK(ssim(small, small_b) == doctest::Approx(oracle::ssim(small, small_b, 7)).epsilon(1e-10));
  auto per = ssim_per_image(torch::cat({a, b}), torch::cat({b, b}));
  CHECK(per[0] == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-10));
  CHECK(per[1] == doctest::Approx(1.0));
}

TEST_CASE("ranking metrics agree with direct oracles") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_scores(rng, 2 + rng() % 199);
    CHECK(auroc(s) == oracle::auroc(s.scores, s.labels));
    CHECK(fpr_at_tpr(s, 0.95) == oracle::fpr_at_tpr(s.scores, s.labels, 0.95));
    CHECK(fpr_at_tpr(s, 0.99) == oracle::fpr_at_tpr(s.scores, s.labels, 0.99));
    CHECK(std::abs(auprc(s) - oracle::average_precision(s.scores, s.labels)) < 1e-10);
  }
}

TEST_CASE("ranking metric edge cases") {
  auto perfect = ScoreSet::from({0.1, 0.2, 0.3}, {0.5, 0.9});
  CHECK(auroc(perfect) == 1.0);
  CHECK(auprc(perfect) == 1.0);
  CHECK(fpr_at_tpr(perfect, 0.99) == 0.0);
  auto tied = ScoreSet::from({1, 1}, {1, 1});
  CHECK(auroc(tied) == 0.5);
  CHECK(fpr_at_tpr(tied, 0.95) == 1.0);

  auto roc = roc_curve(perfect);
  CHECK(roc.front().x == 0.0);
  CHECK(roc.back().x == 1.0);
  CHECK(roc.back().y == 1.0);

  CHECK_THROWS_AS(auroc(ScoreSet::from({0.1}, {})), ConfigError);
  ScoreSet bad{{0.1, 0.2}, {0, 2}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(fpr_at_tpr(perfect, 0.0), ConfigError);
}

TEST_CASE("Fréchet distance") {
  std::mt19937 rng(23);
  Eigen::VectorXd m = Eigen::VectorXd::Random(4);
  Eigen::MatrixXd s = random_spd(rng, 4);
  CHECK(std::abs(frechet_distance(stats(m, s), stats(m, s))) < 1e-8);

  Eigen::VectorXd d(4);
  d << 1.0, -2.0, 0.5, 3.0;
  Eigen::MatrixXd diag = Eigen::Vector4d(0.5, 2.0, 1.0, 3.0).asDiagonal();
  CHECK(frechet_distance(stats(m, diag), stats(m + d, diag)) == doctest::Approx(d.squaredNorm()).epsilon(1e-10));

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd ma = Eigen::VectorXd::Random(4), mb = Eigen::VectorXd::Random(4);
    Eigen::MatrixXd sa = random_spd(rng, 4), sb = random_spd(rng, 4);
    CHECK(std::abs(frechet_distance(stats(ma, sa), stats(mb, sb)) - oracle::frechet(ma, sa, mb, sb)) < 1e-8);
  }

  auto other = stats(m, s);
  other.extractor_hash = "different";
  CHECK_THROWS_AS(frechet_distance(stats(m, s), other), ConfigError);
}

TEST_CASE("feature statistics from rows") {
  Eigen::MatrixXd f(3, 2);
  f << 1, 2, 3, 4, 5, 9;
  auto s = feature_stats(f, "h");
  CHECK(s.mean(0) == doctest::Approx(3.0));
  CHECK(s.mean(1) == doctest::Approx(5.0));
  CHECK(s.covariance(0, 0) == doctest::Approx(4.0));
  CHECK(s.covariance(0, 1) == doctest::Approx(7.0));
  CHECK(s.covariance(1, 1) == doctest::Approx(13.0));
  CHECK_THROWS_AS(feature_stats(Eigen::MatrixXd(1, 2), "h"), ConfigError);
}

TEST_CASE("manifold test logic with stub mappings") {
  torch::manual_seed(0);
  const int res = 16;
  std::map<std::string, Tensor> by_class;
  by_class["circles"] = data::stack(data::make_shapes(data::ShapeKind::circles, 120, res, 1));
  by_class["squares"] = data::stack(data::make_shapes(data::ShapeKind::squares, 120, res, 2));
  by_class["crosses"] = data::stack(data::make_shapes(data::ShapeKind::crosses, 120, res, 3));
  ClassifierOptions opt;
  opt.min_accuracy = 0.9;
  auto classifier = train_domain_classifier(by_class, opt);
  CHECK(classifier.holdout_accuracy >= 0.9);

  auto fx = FeatureExtractor::builtin();
  auto train_stats = feature_stats(by_class["circles"], fx);
  std::map<std::string, Tensor> ood{
      {"squares", data::stack(data::make_shapes(data::ShapeKind::squares, 60, res, 12))},
      {"crosses", data::stack(data::make_shapes(data::ShapeKind::crosses, 60, res, 13))}};

  auto identity = manifold_test([](const Tensor& x) { return x; }, train_stats, ood, fx, classifier, "circles");
  for (const auto& [name, fid] : identity.fid_recon_vs_train) CHECK(fid == identity.fid_input_vs_train.at(name));
  CHECK_FALSE(identity.pass);
  CHECK(identity.predicted_class != "circles");

  const Tensor prototype = by_class["circles"][0];
  auto constant = manifold_test([&](const Tensor& x) { return prototype.unsqueeze(0).expand_as(x).clone(); },
                                train_stats, ood, fx, classifier, "circles");
  CHECK(constant.predicted_class == "circles");
  CHECK(constant.mean_confidence > 0.5);
}

TEST_CASE("vgg16 weights load from an archive with a checksum sidecar") {
  auto dir = fs::temp_directory_path() / ("morphaeus_vgg_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  CHECK_THROWS_WITH_AS(FeatureExtractor::vgg16(dir), doctest::Contains("export_vgg16_weights.py"), ConfigError);

  fs::create_directories(dir);
  torch::serialize::OutputArchive archive;
  const std::vector<int> layers = {0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28};
  const std::vector<int> widths = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
  int64_t in = 3;
  torch::manual_seed(4);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto key = "features_" + std::to_string(layers[i]);
    archive.write(key + "_weight", torch::randn({widths[i], in, 3, 3}) * 0.05);
    archive.write(key + "_bias", torch::zeros({widths[i]}));
    in = widths[i];
  }
  const auto file = dir / "vgg16_features.pt";
  archive.save_to(file.string());
  std::ifstream bytes(file, std::ios::binary);
  const std::string content((std::istreambuf_iterator<char>(bytes)), std::istreambuf_iterator<char>());
  std::ofstream(dir / "vgg16_features.pt.sha256") << sha256_hex(content) << "  vgg16_features.pt\n";

  auto fx = FeatureExtractor::vgg16(dir, 32);
  auto x = torch::rand({2, 1, 16, 16});
  CHECK(fx.taps(x).size() == 3);
  CHECK(fx.pooled(x).sizes() == torch::IntArrayRef{2, 512});

  std::ofstream(dir / "vgg16_features.pt.sha256") << std::string(64, '0') << "\n";
  CHECK_THROWS_WITH_AS(FeatureExtractor::vgg16(dir), doctest::Contains("checksum"), ConfigError);
  fs::remove_all(dir);
}
