#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#undef CHECK  // torch defines a glog-style CHECK
#include <doctest.h>

#include "morphaeus/training.hpp"

#include <fstream>

using namespace morphaeus;
using namespace morphaeus::training;
namespace fs = std::filesystem;

namespace {

data::DatasetSplit tiny_split() {
  data::SyntheticSpec spec;
  spec.n_normal = 40;
  spec.n_anomalous = 0;
  spec.resolution = 16;
  return data::make_synthetic(spec).split;
}

std::shared_ptr<MorphAEus> tiny_morphaeus(double alpha = 0.0) {
  auto cfg = MorphAEusConfig::for_resolution(16);
  cfg.encoder_filters = {8, 8, 8, 8};
  cfg.latent_channels = 8;
  cfg.head_filters = 8;
  cfg.alpha = alpha;
  return build_morphaeus(cfg);
}

TrainConfig quick(int epochs, int start) {
  TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.batch_size = 8;
  cfg.deformation_start_epoch = start;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("early stopping fires after exactly `patience` stale epochs") {
  EarlyStopping stop(25, 1e-9);
  CHECK_FALSE(stop.update(1.0));
  CHECK(stop.improved());
  CHECK_FALSE(stop.update(0.5));
  for (int i = 1; i < 25; ++i) {
    CHECK_FALSE(stop.update(0.5 - 1e-10));  // below min_delta: not an improvement
    CHECK(stop.stale_epochs() == i);
  }
  CHECK(stop.update(0.7));
  CHECK(stop.best() == 0.5);

  stop.reset();
  CHECK(stop.stale_epochs() == 0);
  CHECK_FALSE(stop.update(9.0));
  CHECK(stop.improved());
  CHECK_THROWS_AS(EarlyStopping(0, 0.0), ConfigError);
}

TEST_CASE("recipes per model family") {
  auto m = recipe(ModelKind::morphaeus);
  CHECK(m.train.batch_size == 16);
  CHECK(m.train.learning_rate == 5e-4);
  CHECK(m.train.patience == 25);
  CHECK(m.train.min_delta == 1e-9);
  CHECK(m.train.max_epochs == 1000);
  CHECK(m.alpha == 0.05);
  CHECK(recipe("dae").train.learning_rate == 1e-4);
  CHECK(recipe("aae").train.batch_size == 128);
  CHECK(recipe("aae").train.grad_clip_norm == 5.0);
  CHECK(recipe("beta-vae").gamma == 10.0);
  CHECK(recipe("vae").train.batch_size == 64);
  CHECK(recipe("spatial-ae").reconstruction_loss == "l1");
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("deformation terms and beta follow the epoch schedule") {
  auto split = tiny_split();
  auto result = train(tiny_morphaeus(), split, quick(5, 2));
  const auto& epochs = result.history.epochs;
  REQUIRE(epochs.size() == 5);
  for (const auto& e : epochs) {
    if (e.epoch < 2) {
      CHECK(e.train.lncc_term == 0.0);
      CHECK(e.train.smoothness == 0.0);
      CHECK(e.val.lncc_term == 0.0);
    } else {
      CHECK(e.train.lncc_term > 0.0);
    }
  }
  CHECK(epochs[2].beta == 1e-3);
  CHECK(epochs[4].beta == 3.0);
  CHECK(epochs[3].beta == doctest::Approx(1e-3 + 0.5 * (3.0 - 1e-3)));
}

TEST_CASE("training is reproducible with a fixed seed") {
  auto split = tiny_split();
  auto a = train(tiny_morphaeus(), split, quick(3, 1));
  auto b = train(tiny_morphaeus(), split, quick(3, 1));
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(std::abs(a.history.epochs[i].train.total - b.history.epochs[i].train.total) < 1e-4);
    CHECK(std::abs(a.history.epochs[i].val.total - b.history.epochs[i].val.total) < 1e-4);
  }
}

TEST_CASE("training writes the best checkpoint and history") {
  auto dir = fs::temp_directory_path() / ("morphaeus_train_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  auto cfg = quick(3, 10);
  cfg.out_dir = dir;
  auto fx = FeatureExtractor::builtin();
  auto result = train(tiny_morphaeus(0.05), tiny_split(), cfg, &fx);
  CHECK(fs::exists(dir / "best.ckpt"));
  CHECK(result.checkpoint == dir / "best.ckpt");
  std::ifstream csv(dir / "history.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("epoch,train_total,train_mse,train_perceptual,train_lncc_term", 0) == 0);
  CHECK(header.find("val_total") != std::string::npos);
  auto ck = load_checkpoint(dir / "best.ckpt");
  CHECK(ck.epoch == result.history.best_epoch);
  CHECK(ck.meta["seed"] == 1);
  CHECK(ck.meta["train_config"]["max_epochs"] == 3);
  fs::remove_all(dir);
}

TEST_CASE("divergence raises with the loss components") {
  auto model = tiny_morphaeus();
  {
    torch::NoGradGuard no_grad;
    for (auto& p : model->parameters()) p.fill_(std::numeric_limits<float>::quiet_NaN());
  }
  CHECK_THROWS_WITH_AS(train(model, tiny_split(), quick(2, 10)), doctest::Contains("mse"), RuntimeFailure);
}

TEST_CASE("perceptual weight without an extractor is rejected") {
  CHECK_THROWS_AS(train(tiny_morphaeus(0.05), tiny_split(), quick(1, 10), nullptr), ConfigError);
}

TEST_CASE("baseline objectives train for an epoch") {
  auto split = tiny_split();
  for (auto kind : {ModelKind::spatial_ae, ModelKind::vae, ModelKind::beta_vae, ModelKind::dae, ModelKind::aae,
                    ModelKind::plain_ae, ModelKind::dense_ae}) {
    CAPTURE(to_string(kind));
    BaselineConfig b;
    b.kind = kind;
    b.resolution = 16;
    if (kind == ModelKind::plain_ae) b.filters = {8, 8, 8, 8};
    b.latent_dim = 8;
    auto cfg = quick(1, 10);
    auto r = train(build_baseline(kind, b), split, cfg);
    REQUIRE(r.history.epochs.size() == 1);
    CHECK(std::isfinite(r.history.epochs[0].val.total));
  }
}
