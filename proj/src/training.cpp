#include "morphaeus/training.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

namespace morphaeus::training {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (min_delta < 0) throw ConfigError("min_delta must be non-negative");
  if (deformation_start_epoch < 0) throw ConfigError("deformation_start_epoch must be non-negative");
  if (grad_clip_norm < 0) throw ConfigError("grad_clip_norm must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"max_epochs", max_epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"optimizer", "adam"},
          {"patience", patience},
          {"min_delta", min_delta},
          {"deformation_start_epoch", deformation_start_epoch},
          {"seed", seed},
          {"grad_clip_norm", grad_clip_norm},
          {"deterministic", deterministic},
          {"restore_best", restore_best}};
}

nlohmann::json Recipe::to_json() const {
  return {{"kind", to_string(kind)},   {"train", train.to_json()}, {"reconstruction_loss", reconstruction_loss},
          {"alpha", alpha},            {"beta", beta},             {"gamma", gamma},
          {"capacity_max", capacity_max}};
}

Recipe recipe(ModelKind kind) {
  Recipe r;
  r.kind = kind;
  auto& t = r.train;
  switch (kind) {
    case ModelKind::morphaeus:
      t.batch_size = 16;
      t.learning_rate = 5e-4;
      r.reconstruction_loss = "mse+perceptual";
      r.alpha = 0.05;
      break;
    case ModelKind::spatial_ae:
    case ModelKind::dense_ae:
      t.batch_size = 64;
      t.learning_rate = 5e-4;
      r.reconstruction_loss = "l1";
      break;
    case ModelKind::vae:
      t.batch_size = 64;
      t.learning_rate = 5e-4;
      r.reconstruction_loss = "l2";
      break;
    case ModelKind::beta_vae:
      t.batch_size = 64;
      t.learning_rate = 5e-4;
      r.reconstruction_loss = "l2";
      r.beta = 4.0;
      r.gamma = 10.0;
      r.capacity_max = 50.0;
      break;
    case ModelKind::dae:
      t.batch_size = 16;
      t.learning_rate = 1e-4;
      r.reconstruction_loss = "l1";
      break;
    case ModelKind::aae:
      t.batch_size = 128;
      t.learning_rate = 5e-4;
      t.grad_clip_norm = 5.0;
      r.reconstruction_loss = "mse";
      break;
    case ModelKind::plain_ae:
      t.batch_size = 16;
      t.learning_rate = 5e-4;
      r.reconstruction_loss = "mse";
      break;
  }
  return r;
}

Recipe recipe(const std::string& kind) { return recipe(parse_model_kind(kind)); }

// --- history -----------------------------------------------------------------------

namespace {

const char* kColumns[] = {"total", "mse", "perceptual", "lncc_term", "smoothness"};

std::vector<double> columns(const LossValues& v) { return {v.total, v.mse, v.perceptual, v.lncc_term, v.smoothness}; }

nlohmann::json loss_json(const LossValues& v) {
  nlohmann::json j{{"total", v.total},
                   {"mse", v.mse},
                   {"perceptual", v.perceptual},
                   {"lncc_term", v.lncc_term},
                   {"smoothness", v.smoothness}};
  for (const auto& [k, x] : v.extra) j["extra"][k] = x;
  return j;
}

}  // namespace

void TrainHistory::write_csv(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "epoch";
  for (const char* prefix : {"train_", "val_"}) {
    for (const char* c : kColumns) os << "," << prefix << c;
  }
  os << ",beta,seconds\n";
  os.precision(17);
  for (const auto& e : epochs) {
    os << e.epoch;
    for (double v : columns(e.train)) os << "," << v;
    for (double v : columns(e.val)) os << "," << v;
    os << "," << e.beta << "," << e.seconds << "\n";
  }
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json j;
  j["best_epoch"] = best_epoch;
  j["best_val_loss"] = best_val_loss;
  j["best_checkpoint"] = best_checkpoint;
  j["stopped_early"] = stopped_early;
  j["provenance"] = provenance;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train", loss_json(e.train)},
                           {"val", loss_json(e.val)},
                           {"beta", e.beta},
                           {"seconds", e.seconds}});
  }
  return j;
}

// --- early stopping ------------------------------------------------------------------

EarlyStopping::EarlyStopping(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (min_delta < 0) throw ConfigError("min_delta must be non-negative");
}

bool EarlyStopping::update(double value) {
  improved_ = value < best_ - min_delta_;
  if (improved_) {
    best_ = value;
    stale_ = 0;
    return false;
  }
  ++stale_;
  return stale_ >= patience_;
}

void EarlyStopping::reset() {
  best_ = std::numeric_limits<double>::infinity();
  stale_ = 0;
  improved_ = false;
}

// --- objectives ------------------------------------------------------------------------

losses::LossBreakdown objective(AnomalyModel& model, const Tensor& x, const EpochState& state) {
  const auto& spec = model.spec();
  switch (model.kind()) {
    case ModelKind::morphaeus: {
      const auto& cfg = spec.morphaeus;
      losses::MorphAEusLossOptions opt;
      opt.alpha = cfg.alpha;
      opt.beta = state.beta;
      opt.epoch = state.epoch;
      opt.start_epoch = state.start_epoch;
      opt.lncc_window = cfg.lncc_window;
      opt.smoothness = cfg.smoothness;
      opt.use_warp = cfg.use_warp;
      return losses::morphaeus_objective(x, model.forward(x), opt, state.extractor);
    }
    case ModelKind::spatial_ae:
    case ModelKind::dense_ae: {
      auto out = model.forward(x);
      losses::LossBreakdown lb;
      lb.total = F::l1_loss(out.x_prior, x);
      lb.mse = F::mse_loss(out.x_prior, x).item<double>();
      lb.extra["l1"] = lb.total.item<double>();
      return lb;
    }
    case ModelKind::plain_ae: {
      auto out = model.forward(x);
      losses::LossBreakdown lb;
      lb.total = F::mse_loss(out.x_prior, x);
      lb.mse = lb.total.item<double>();
      return lb;
    }
    case ModelKind::vae: {
      auto out = model.forward(x);
      return losses::elbo(x, out.x_prior, *out.mu, *out.logvar);
    }
    case ModelKind::beta_vae: {
      auto out = model.forward(x);
      return losses::beta_vae_objective(x, out.x_prior, *out.mu, *out.logvar, spec.baseline.gamma, state.capacity);
    }
    case ModelKind::dae: {
      auto noisy = data::corrupt(x, spec.baseline.noise, state.noise_seed);
      auto out = model.forward(noisy);
      losses::LossBreakdown lb;
      lb.total = F::l1_loss(out.x_prior, x);
      lb.mse = F::mse_loss(out.x_prior, x).item<double>();
      lb.extra["l1"] = lb.total.item<double>();
      return lb;
    }
    case ModelKind::aae: {
      // Validation view: weighted reconstruction error only.
      auto out = model.forward(x);
      losses::LossBreakdown lb;
      lb.total = spec.baseline.aae_error_weight * F::mse_loss(out.x_prior, x);
      lb.mse = F::mse_loss(out.x_prior, x).item<double>();
      return lb;
    }
  }
  throw ConfigError("no objective for model kind " + to_string(model.kind()));
}

namespace {

struct Accumulator {
  LossValues sum;
  double weight = 0.0;

  void add(const losses::LossBreakdown& lb, double total, double n) {
    sum.total += total * n;
    sum.mse += lb.mse * n;
    sum.perceptual += lb.perceptual * n;
    sum.lncc_term += lb.lncc_term * n;
    sum.smoothness += lb.smoothness * n;
    for (const auto& [k, v] : lb.extra) sum.extra[k] += v * n;
    weight += n;
  }

  LossValues mean() const {
    LossValues m = sum;
    if (weight > 0) {
      m.total /= weight;
      m.mse /= weight;
      m.perceptual /= weight;
      m.lncc_term /= weight;
      m.smoothness /= weight;
      for (auto& [k, v] : m.extra) v /= weight;
    }
    return m;
  }
};

void clip(const std::vector<Tensor>& params, double norm) {
  if (norm > 0) torch::nn::utils::clip_grad_norm_(params, norm);
}

/// Four-step adversarial update: image discriminator, generator, latent
/// discriminator, then encoder + generator on reconstruction and latent adversarial loss.
losses::LossBreakdown aae_step(AdversarialAE& aae, const Tensor& x, torch::optim::Adam& opt_ae,
                               torch::optim::Adam& opt_d, torch::optim::Adam& opt_dz, double clip_norm) {
  const auto& cfg = aae.spec().baseline;
  const int64_t n = x.size(0);
  losses::LossBreakdown lb;

  auto z_prior = torch::randn({n, aae.latent_dim()});
  {
    auto fake = aae.generate(z_prior).detach();
    auto d = losses::adversarial_terms(aae.discriminate(x), aae.discriminate(fake)).discriminator;
    opt_d.zero_grad();
    d.backward();
    clip(aae.discriminator_parameters(), clip_norm);
    opt_d.step();
    lb.extra["d_loss"] = d.item<double>();
  }
  {
    auto real_logits = torch::zeros({n});
    auto g = losses::adversarial_terms(real_logits, aae.discriminate(aae.generate(z_prior))).generator;
    opt_ae.zero_grad();
    g.backward();
    clip(aae.autoencoder_parameters(), clip_norm);
    opt_ae.step();
    lb.extra["g_loss"] = g.item<double>();
  }
  {
    auto z = aae.encode(x).detach();
    auto dz = losses::adversarial_terms(aae.discriminate_latent(z_prior), aae.discriminate_latent(z)).discriminator;
    opt_dz.zero_grad();
    dz.backward();
    clip(aae.latent_discriminator_parameters(), clip_norm);
    opt_dz.step();
    lb.extra["dz_loss"] = dz.item<double>();
  }
  auto z = aae.encode(x);
  auto recon = aae.generate(z);
  auto error = F::mse_loss(recon, x);
  auto adv = losses::adversarial_terms(torch::zeros({n}), aae.discriminate_latent(z)).generator;
  auto total = cfg.aae_error_weight * error + cfg.aae_adv_dz_weight * adv;
  opt_ae.zero_grad();
  total.backward();
  clip(aae.autoencoder_parameters(), clip_norm);
  opt_ae.step();
  lb.mse = error.item<double>();
  lb.extra["e_adv_loss"] = adv.item<double>();
  lb.total = (cfg.aae_error_weight * error).detach();
  return lb;
}

void check_finite(const losses::LossBreakdown& lb, double total, int epoch) {
  if (std::isfinite(total)) return;
  spdlog::error("non-finite loss at epoch {}: total={} mse={} perceptual={} lncc_term={} smoothness={}", epoch,
                total, lb.mse, lb.perceptual, lb.lncc_term, lb.smoothness);
  throw RuntimeFailure("non-finite loss at epoch " + std::to_string(epoch) + " (total=" + std::to_string(total) +
                       ", mse=" + std::to_string(lb.mse) + ", perceptual=" + std::to_string(lb.perceptual) +
                       ", lncc_term=" + std::to_string(lb.lncc_term) + ", smoothness=" +
                       std::to_string(lb.smoothness) + ")");
}

using StateSnapshot = std::vector<std::pair<std::string, Tensor>>;

StateSnapshot snapshot(const AnomalyModel& model) {
  StateSnapshot s;
  for (const auto& p : model.named_parameters()) s.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : model.named_buffers()) s.emplace_back(b.key(), b.value().detach().clone());
  return s;
}

void restore(AnomalyModel& model, const StateSnapshot& s) {
  torch::NoGradGuard no_grad;
  auto params = model.named_parameters();
  auto buffers = model.named_buffers();
  for (const auto& [name, value] : s) {
    if (auto* p = params.find(name)) {
      p->copy_(value);
    } else if (auto* b = buffers.find(name)) {
      b->copy_(value);
    }
  }
}

void print_progress(const EpochRecord& r, const std::string& model) {
  std::cout << "event=epoch model=" << model << " epoch=" << r.epoch << " train_total=" << r.train.total
            << " val_total=" << r.val.total << " mse=" << r.train.mse << " perceptual=" << r.train.perceptual
            << " lncc_term=" << r.train.lncc_term << " smoothness=" << r.train.smoothness << " beta=" << r.beta
            << " seconds=" << r.seconds << "\n";
  std::cout.flush();
}

}  // namespace

TrainResult train(const ModelPtr& model, const data::DatasetSplit& split, const TrainConfig& cfg,
                  const FeatureExtractor* extractor) {
  cfg.validate();
  if (split.train.empty()) throw ConfigError("training split is empty");
  if (cfg.deterministic) use_deterministic_kernels();
  seed_everything(cfg.seed);

  const bool is_morph = model->kind() == ModelKind::morphaeus;
  const bool is_aae = model->kind() == ModelKind::aae;
  if (is_morph && model->spec().morphaeus.alpha > 0 && !extractor) {
    throw ConfigError("MorphAEus with alpha > 0 needs a feature extractor");
  }
  const int start_epoch = cfg.deformation_start_epoch;
  const int final_epoch = cfg.max_epochs - 1;
  double beta_start = 1e-3, beta_end = 3.0;
  if (is_morph) {
    beta_start = model->spec().morphaeus.beta_start;
    beta_end = model->spec().morphaeus.beta_end;
  }
  auto beta_at = [&](int epoch) {
    if (!is_morph) return 0.0;
    if (final_epoch <= start_epoch) return beta_start;
    return losses::beta_schedule(epoch, final_epoch, start_epoch, beta_start, beta_end);
  };
  const bool deformation_used = is_morph && model->spec().morphaeus.use_warp;

  auto opts = torch::optim::AdamOptions(cfg.learning_rate);
  std::unique_ptr<torch::optim::Adam> opt, opt_d, opt_dz;
  AdversarialAE* aae = nullptr;
  if (is_aae) {
    aae = dynamic_cast<AdversarialAE*>(model.get());
    auto gan_opts = torch::optim::AdamOptions(cfg.learning_rate).betas({0.5, 0.999});
    opt = std::make_unique<torch::optim::Adam>(aae->autoencoder_parameters(), gan_opts);
    opt_d = std::make_unique<torch::optim::Adam>(aae->discriminator_parameters(), gan_opts);
    opt_dz = std::make_unique<torch::optim::Adam>(aae->latent_discriminator_parameters(), gan_opts);
  } else {
    opt = std::make_unique<torch::optim::Adam>(model->parameters(), opts);
  }

  const auto& train_set = split.train;
  const auto& val_set = split.val.empty() ? split.train : split.val;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.model = model;
  auto& history = result.history;
  history.provenance = {{"train_config", cfg.to_json()},
                        {"model", model->spec().to_json()},
                        {"manifest_hash", split.manifest_hash()},
                        {"extractor", extractor ? extractor->hash() : ""},
                        {"seed", cfg.seed}};
  EarlyStopping stopper(cfg.patience, cfg.min_delta);
  StateSnapshot best_state = snapshot(*model);
  const fs::path ckpt_path = cfg.out_dir.empty() ? fs::path() : cfg.out_dir / "best.ckpt";

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (deformation_used && epoch == start_epoch) stopper.reset();

    EpochState state;
    state.epoch = epoch;
    state.final_epoch = final_epoch;
    state.start_epoch = start_epoch;
    state.beta = beta_at(epoch);
    state.capacity = losses::capacity_schedule(epoch, final_epoch, model->spec().baseline.capacity_max);
    state.extractor = extractor;

    model->train();
    std::shuffle(order.begin(), order.end(), rng);
    Accumulator train_acc;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<std::size_t> idx(order.begin() + b, order.begin() + std::min(order.size(), b + cfg.batch_size));
      // BatchNorm needs more than one value per channel.
      if (idx.size() < 2 && order.size() >= 2) continue;
      Tensor x = data::stack(train_set, idx);
      state.noise_seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch) * 10007ULL + b;
      losses::LossBreakdown lb;
      if (is_aae) {
        lb = aae_step(*aae, x, *opt, *opt_d, *opt_dz, cfg.grad_clip_norm);
      } else {
        lb = objective(*model, x, state);
        opt->zero_grad();
        lb.total.backward();
        clip(model->parameters(), cfg.grad_clip_norm);
        opt->step();
      }
      double total = lb.value();
      check_finite(lb, total, epoch);
      train_acc.add(lb, total, static_cast<double>(idx.size()));
    }

    model->eval();
    Accumulator val_acc;
    {
      torch::NoGradGuard no_grad;
      for (std::size_t b = 0; b < val_set.size(); b += cfg.batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = b; i < std::min(val_set.size(), b + cfg.batch_size); ++i) idx.push_back(i);
        Tensor x = data::stack(val_set, idx);
        state.noise_seed = cfg.seed * 7919ULL + b;
        auto lb = objective(*model, x, state);
        double total = lb.value();
        check_finite(lb, total, epoch);
        val_acc.add(lb, total, static_cast<double>(idx.size()));
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train = train_acc.mean();
    record.val = val_acc.mean();
    record.beta = state.beta;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(record);
    if (cfg.progress) print_progress(record, to_string(model->kind()));
    spdlog::debug("epoch {} train={:.6f} val={:.6f} beta={:.4g}", epoch, record.train.total, record.val.total,
                  record.beta);

    bool stop = stopper.update(record.val.total);
    if (stopper.improved()) {
      history.best_epoch = epoch;
      history.best_val_loss = record.val.total;
      best_state = snapshot(*model);
      if (!ckpt_path.empty()) {
        save_checkpoint(ckpt_path, *model, epoch, history.provenance);
        history.best_checkpoint = ckpt_path.string();
      }
    }
    if (stop) {
      history.stopped_early = true;
      break;
    }
  }

  if (cfg.restore_best && history.best_epoch >= 0) restore(*model, best_state);
  model->eval();
  if (!cfg.out_dir.empty()) {
    history.write_csv(cfg.out_dir / "history.csv");
    std::ofstream(cfg.out_dir / "history.json") << history.to_json().dump(2) << "\n";
    result.checkpoint = ckpt_path;
  }
  return result;
}

}  // namespace morphaeus::training
