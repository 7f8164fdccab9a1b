#include "morphaeus/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace morphaeus {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

// --- kinds -------------------------------------------------------------------

namespace {

const std::vector<std::pair<ModelKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ModelKind, std::string>> names = {
      {ModelKind::morphaeus, "morphaeus"}, {ModelKind::spatial_ae, "spatial-ae"},
      {ModelKind::dense_ae, "dense-ae"},   {ModelKind::vae, "vae"},
      {ModelKind::beta_vae, "beta-vae"},   {ModelKind::dae, "dae"},
      {ModelKind::aae, "aae"},             {ModelKind::plain_ae, "plain-ae"}};
  return names;
}

int log2_exact(int value) {
  if (value <= 0 || (value & (value - 1)) != 0) return -1;
  int k = 0;
  while ((1 << k) < value) ++k;
  return k;
}

}  // namespace

std::string to_string(ModelKind kind) {
  for (const auto& [k, name] : kind_names()) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::vector<std::string> supported_model_kinds() {
  std::vector<std::string> out;
  for (const auto& [k, name] : kind_names()) out.push_back(name);
  return out;
}

ModelKind parse_model_kind(const std::string& name) {
  for (const auto& [k, n] : kind_names()) {
    if (n == name) return k;
  }
  std::ostringstream os;
  os << "unknown model kind '" << name << "'; supported:";
  for (const auto& n : supported_model_kinds()) os << " " << n;
  throw ConfigError(os.str());
}

// --- configs -------------------------------------------------------------------

MorphAEusConfig MorphAEusConfig::for_resolution(int resolution) {
  MorphAEusConfig cfg;
  cfg.resolution = resolution;
  int depth = log2_exact(resolution);
  if (depth < 4) throw ConfigError("MorphAEus resolution must be a power of two >= 16");
  std::vector<int> base = cfg.encoder_filters;
  if (depth <= static_cast<int>(base.size())) {
    cfg.encoder_filters.assign(base.end() - depth, base.end());
  } else {
    cfg.encoder_filters.assign(depth - base.size(), base.front());
    cfg.encoder_filters.insert(cfg.encoder_filters.end(), base.begin(), base.end());
  }
  return cfg;
}

int MorphAEusConfig::expected_depth() const { return log2_exact(resolution); }

void MorphAEusConfig::validate() const {
  int depth = expected_depth();
  if (depth < 4) {
    throw ConfigError("MorphAEus resolution must be a power of two >= 16, got " + std::to_string(resolution));
  }
  if (static_cast<int>(encoder_filters.size()) != depth) {
    throw ConfigError("encoder filter list has " + std::to_string(encoder_filters.size()) +
                      " entries; resolution " + std::to_string(resolution) + " needs depth " +
                      std::to_string(depth) + " (one max-pool per stage down to 1x1)");
  }
  for (int f : encoder_filters) {
    if (f <= 0) throw ConfigError("encoder filters must be positive");
  }
  if (latent_channels <= 0 || head_filters <= 0 || head_layers <= 0) {
    throw ConfigError("latent channels and head sizes must be positive");
  }
  if (alpha < 0) throw ConfigError("alpha must be non-negative");
  if (beta_start <= 0 || beta_end < beta_start) {
    throw ConfigError("beta schedule endpoints must be positive and nondecreasing");
  }
  if (deformation_start_epoch < 0) throw ConfigError("deformation start epoch must be non-negative");
  if (max_displacement <= 0) throw ConfigError("max displacement must be positive");
  if (lncc_window < 1 || lncc_window % 2 == 0 || lncc_window > resolution) {
    throw ConfigError("lncc window must be odd and no larger than the image");
  }
}

nlohmann::json MorphAEusConfig::to_json() const {
  return {{"resolution", resolution},
          {"encoder_filters", encoder_filters},
          {"latent_channels", latent_channels},
          {"head_filters", head_filters},
          {"head_layers", head_layers},
          {"alpha", alpha},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"deformation_start_epoch", deformation_start_epoch},
          {"max_displacement", max_displacement},
          {"lncc_window", lncc_window},
          {"smoothness", smoothness == losses::SmoothnessKind::gradient ? "gradient" : "magnitude"},
          {"stop_warp_gradient_at_prior", stop_warp_gradient_at_prior},
          {"use_warp", use_warp}};
}

MorphAEusConfig MorphAEusConfig::from_json(const nlohmann::json& j) {
  MorphAEusConfig c;
  c.resolution = j.at("resolution").get<int>();
  c.encoder_filters = j.at("encoder_filters").get<std::vector<int>>();
  c.latent_channels = j.at("latent_channels").get<int>();
  c.head_filters = j.at("head_filters").get<int>();
  c.head_layers = j.at("head_layers").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  c.deformation_start_epoch = j.at("deformation_start_epoch").get<int>();
  c.max_displacement = j.at("max_displacement").get<double>();
  c.lncc_window = j.at("lncc_window").get<int>();
  c.smoothness = j.at("smoothness").get<std::string>() == "magnitude" ? losses::SmoothnessKind::magnitude
                                                                      : losses::SmoothnessKind::gradient;
  c.stop_warp_gradient_at_prior = j.at("stop_warp_gradient_at_prior").get<bool>();
  c.use_warp = j.at("use_warp").get<bool>();
  return c;
}

void BaselineConfig::validate() const {
  if (kind == ModelKind::morphaeus) throw ConfigError("morphaeus is not a baseline kind");
  int depth = log2_exact(resolution);
  if (depth < 4) throw ConfigError("baseline resolution must be a power of two >= 16");
  if (kind == ModelKind::plain_ae && (this->depth < 0 || this->depth > depth)) {
    throw ConfigError("plain-ae depth must lie in [1, " + std::to_string(depth) + "]");
  }
  if (noise.magnitude < 0) throw ConfigError("noise magnitude must be non-negative");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"resolution", resolution},
          {"filters", filters},
          {"latent_dim", latent_dim},
          {"latent_channels", latent_channels},
          {"depth", depth},
          {"noise_magnitude", noise.magnitude},
          {"noise_coarseness", noise.coarseness},
          {"beta_vae_beta", beta_vae_beta},
          {"gamma", gamma},
          {"capacity_max", capacity_max},
          {"aae_error_weight", aae_error_weight},
          {"aae_adv_dz_weight", aae_adv_dz_weight}};
}

BaselineConfig BaselineConfig::from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.resolution = j.at("resolution").get<int>();
  c.filters = j.at("filters").get<std::vector<int>>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.latent_channels = j.at("latent_channels").get<int>();
  c.depth = j.at("depth").get<int>();
  c.noise.magnitude = j.at("noise_magnitude").get<double>();
  c.noise.coarseness = j.at("noise_coarseness").get<int>();
  c.beta_vae_beta = j.at("beta_vae_beta").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.capacity_max = j.at("capacity_max").get<double>();
  c.aae_error_weight = j.at("aae_error_weight").get<double>();
  c.aae_adv_dz_weight = j.at("aae_adv_dz_weight").get<double>();
  return c;
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  if (kind == ModelKind::morphaeus) {
    j["morphaeus"] = morphaeus.to_json();
  } else {
    j["baseline"] = baseline.to_json();
  }
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = parse_model_kind(j.at("kind").get<std::string>());
  if (s.kind == ModelKind::morphaeus) {
    s.morphaeus = MorphAEusConfig::from_json(j.at("morphaeus"));
  } else {
    s.baseline = BaselineConfig::from_json(j.at("baseline"));
  }
  return s;
}

// --- building blocks -------------------------------------------------------------

namespace {

nn::Sequential conv_bn_swish(int64_t in, int64_t out) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)), nn::BatchNorm2d(out), nn::SiLU());
}

void add_down_block(nn::Sequential& seq, int64_t in, int64_t out) {
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
  seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
}

void add_up_block(nn::Sequential& seq, int64_t in, int64_t out) {
  seq->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)));
  seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
}

Tensor upsample2(const Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

Tensor resize_to(const Tensor& x, int64_t size) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{size, size})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

std::vector<int> strided_filters(int stages, int first, int cap) {
  std::vector<int> f;
  for (int i = 0; i < stages; ++i) f.push_back(std::min(first << std::min(i, 16), cap));
  return f;
}

template <typename T>
std::vector<Tensor> collect(const std::initializer_list<T>& modules) {
  std::vector<Tensor> out;
  for (const auto& m : modules) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace

void AnomalyModel::check_input(const Tensor& x) const {
  check_image_batch(x, "model input");
  if (x.size(1) != 1 || x.size(2) != resolution() || x.size(3) != resolution()) {
    std::ostringstream os;
    os << to_string(kind()) << " expects [N, 1, " << resolution() << ", " << resolution() << "] input, got "
       << x.sizes();
    throw ShapeError(os.str());
  }
}

// --- MorphAEus ------------------------------------------------------------------

MorphAEus::MorphAEus(const MorphAEusConfig& cfg) : AnomalyModel(ModelSpec{ModelKind::morphaeus, cfg, {}}) {
  cfg.validate();
  const int depth = cfg.expected_depth();
  const auto& f = cfg.encoder_filters;

  int64_t in = 1;
  for (int i = 0; i < depth; ++i) {
    encoder_.push_back(register_module("encoder" + std::to_string(i), conv_bn_swish(in, f[i])));
    in = f[i];
  }
  projection_ = register_module("projection", nn::Conv2d(nn::Conv2dOptions(in, cfg.latent_channels, 1)));

  in = cfg.latent_channels;
  for (int j = 0; j < depth; ++j) {
    int64_t out = f[depth - 1 - j];
    decoder_.push_back(register_module("decoder" + std::to_string(j), conv_bn_swish(in, out)));
    in = out;
  }
  output_ = register_module("output", nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));

  // Shared features at 4 x 4: encoder stage depth-3 (after pooling) and decoder stage 1.
  shared_encoder_stage_ = depth - 3;
  shared_decoder_stage_ = 1;
  int64_t head_in = f[shared_encoder_stage_] + f[depth - 1 - shared_decoder_stage_];
  int64_t size = 4;
  head_ = nn::Sequential();
  for (int l = 0; l < cfg.head_layers; ++l) {
    int64_t stride = size < cfg.resolution ? 2 : 1;
    head_->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(head_in, cfg.head_filters, 3).stride(stride).padding(1).output_padding(stride - 1)));
    head_->push_back(nn::BatchNorm2d(cfg.head_filters));
    head_->push_back(nn::SiLU());
    head_in = cfg.head_filters;
    size *= stride;
  }
  register_module("head", head_);
  head_out_ = register_module("head_out", nn::Conv2d(nn::Conv2dOptions(cfg.head_filters, 2, 3).padding(1)));
  // Identity warp at initialization.
  torch::NoGradGuard no_grad;
  head_out_->weight.zero_();
  head_out_->bias.zero_();
}

ModelOutput MorphAEus::forward(const Tensor& x) {
  check_input(x);
  const auto& cfg = config();
  ModelOutput out;

  Tensor h = x;
  Tensor shared_enc;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    h = F::max_pool2d(encoder_[i]->forward(h), F::MaxPool2dFuncOptions(2));
    if (static_cast<int>(i) == shared_encoder_stage_) shared_enc = h;
  }
  out.latent = projection_->forward(h);

  h = out.latent;
  Tensor shared_dec;
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    h = decoder_[j]->forward(upsample2(h));
    if (static_cast<int>(j) == shared_decoder_stage_) shared_dec = h;
  }
  out.x_prior = torch::sigmoid(output_->forward(h));
  out.shared = {shared_enc, shared_dec};

  Tensor field = head_out_->forward(head_->forward(torch::cat({shared_enc, shared_dec}, 1)));
  field = torch::tanh(field) * cfg.max_displacement_pixels();
  if (field.size(2) != cfg.resolution) field = resize_to(field, cfg.resolution);
  out.field = field;
  Tensor source = cfg.stop_warp_gradient_at_prior ? out.x_prior.detach() : out.x_prior;
  out.x_warp = losses::warp(source, field);
  return out;
}

std::vector<Tensor> MorphAEus::head_parameters() const {
  auto p = head_->parameters();
  auto q = head_out_->parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

// --- ConvAE -----------------------------------------------------------------------

ConvAE::ConvAE(const BaselineConfig& cfg) : AnomalyModel(ModelSpec{cfg.kind, {}, cfg}) {
  cfg.validate();
  const bool dense = cfg.kind == ModelKind::dense_ae;
  const int levels = log2_exact(cfg.resolution);
  const int stages = dense ? levels - 2 : levels - 3;
  auto f = cfg.filters.empty() ? strided_filters(stages, 32, 128) : cfg.filters;
  if (static_cast<int>(f.size()) != stages) {
    throw ConfigError(to_string(cfg.kind) + " at resolution " + std::to_string(cfg.resolution) + " needs " +
                      std::to_string(stages) + " filter entries");
  }
  encoder_ = nn::Sequential();
  int64_t in = 1;
  for (int v : f) {
    add_down_block(encoder_, in, v);
    in = v;
  }
  feature_channels_ = in;
  feature_size_ = cfg.resolution >> stages;
  if (dense) {
    const int64_t latent = cfg.latent_dim > 0 ? cfg.latent_dim : 512;
    const int64_t flat = feature_channels_ * feature_size_ * feature_size_;
    bottleneck_in_ = nn::Sequential(nn::Flatten(), nn::Linear(flat, latent));
    bottleneck_out_ = nn::Sequential(nn::Linear(latent, flat), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  } else {
    bottleneck_in_ = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, cfg.latent_channels, 1)));
    bottleneck_out_ = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(cfg.latent_channels, in, 1)), nn::BatchNorm2d(in),
                                     nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  decoder_ = nn::Sequential();
  for (int i = stages - 1; i >= 0; --i) {
    int64_t out = i > 0 ? f[i - 1] : f[0];
    add_up_block(decoder_, in, out);
    in = out;
  }
  decoder_->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
  decoder_->push_back(nn::Sigmoid());
  register_module("encoder", encoder_);
  register_module("bottleneck_in", bottleneck_in_);
  register_module("bottleneck_out", bottleneck_out_);
  register_module("decoder", decoder_);
}

ModelOutput ConvAE::forward(const Tensor& x) {
  check_input(x);
  ModelOutput out;
  out.latent = bottleneck_in_->forward(encoder_->forward(x));
  Tensor h = bottleneck_out_->forward(out.latent);
  if (h.dim() == 2) h = h.view({h.size(0), feature_channels_, feature_size_, feature_size_});
  out.x_prior = decoder_->forward(h);
  return out;
}

// --- VAE ----------------------------------------------------------------------------

VAE::VAE(const BaselineConfig& cfg) : AnomalyModel(ModelSpec{cfg.kind, {}, cfg}) {
  cfg.validate();
  const bool beta = cfg.kind == ModelKind::beta_vae;
  const int levels = log2_exact(cfg.resolution);
  std::vector<int> f = cfg.filters;
  if (f.empty()) {
    // Both architectures reach a 4 x 4 map; higher resolutions repeat the last layer.
    f = beta ? std::vector<int>{32, 32, 32, 32} : std::vector<int>{32, 64, 128, 256};
    while (static_cast<int>(f.size()) < levels - 2) f.push_back(f.back());
    while (static_cast<int>(f.size()) > levels - 2) f.erase(f.begin());
  }
  const int stages = static_cast<int>(f.size());
  if (stages < 1 || stages > levels) throw ConfigError("invalid VAE filter list length");
  const int64_t latent = cfg.latent_dim > 0 ? cfg.latent_dim : (beta ? 32 : 512);

  encoder_ = nn::Sequential();
  int64_t in = 1;
  for (int v : f) {
    add_down_block(encoder_, in, v);
    in = v;
  }
  encoder_->push_back(nn::Flatten());
  feature_channels_ = in;
  feature_size_ = cfg.resolution >> stages;
  const int64_t flat = feature_channels_ * feature_size_ * feature_size_;

  int64_t hidden_out = flat;
  hidden_ = nn::Sequential();
  expand_ = nn::Sequential();
  if (beta) {
    hidden_->push_back(nn::Linear(flat, 256));
    hidden_->push_back(nn::ReLU());
    hidden_->push_back(nn::Linear(256, 256));
    hidden_->push_back(nn::ReLU());
    hidden_out = 256;
    expand_->push_back(nn::Linear(latent, 256));
    expand_->push_back(nn::ReLU());
    expand_->push_back(nn::Linear(256, 256));
    expand_->push_back(nn::ReLU());
    expand_->push_back(nn::Linear(256, flat));
    expand_->push_back(nn::ReLU());
  } else {
    hidden_->push_back(nn::Identity());
    expand_->push_back(nn::Linear(latent, flat));
    expand_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  mu_ = nn::Linear(hidden_out, latent);
  logvar_ = nn::Linear(hidden_out, latent);

  decoder_ = nn::Sequential();
  for (int i = stages - 1; i >= 0; --i) {
    int64_t out = i > 0 ? f[i - 1] : f[0];
    add_up_block(decoder_, in, out);
    in = out;
  }
  decoder_->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
  decoder_->push_back(nn::Sigmoid());

  register_module("encoder", encoder_);
  register_module("hidden", hidden_);
  register_module("mu", mu_);
  register_module("logvar", logvar_);
  register_module("expand", expand_);
  register_module("decoder", decoder_);
}

ModelOutput VAE::forward(const Tensor& x) {
  check_input(x);
  ModelOutput out;
  Tensor h = hidden_->forward(encoder_->forward(x));
  Tensor mu = mu_->forward(h);
  Tensor logvar = logvar_->forward(h).clamp(-20.0, 10.0);
  Tensor z = is_training() ? mu + torch::randn_like(mu) * torch::exp(0.5 * logvar) : mu;
  Tensor d = expand_->forward(z).view({x.size(0), feature_channels_, feature_size_, feature_size_});
  out.x_prior = decoder_->forward(d);
  out.latent = z;
  out.mu = mu;
  out.logvar = logvar;
  return out;
}

// --- Denoising U-Net ---------------------------------------------------------------------

DenoisingUNet::DenoisingUNet(const BaselineConfig& cfg) : AnomalyModel(ModelSpec{cfg.kind, {}, cfg}) {
  cfg.validate();
  std::vector<int> f = cfg.filters.empty() ? std::vector<int>{16, 32, 64, 128} : cfg.filters;
  if (f.size() < 2) throw ConfigError("dae needs at least two filter entries");
  if ((cfg.resolution >> (f.size() - 1)) < 1) throw ConfigError("dae filter list too deep for the resolution");
  int64_t in = 1;
  for (std::size_t i = 0; i + 1 < f.size(); ++i) {
    down_.push_back(register_module("down" + std::to_string(i), conv_bn_swish(in, f[i])));
    in = f[i];
  }
  middle_ = register_module("middle", conv_bn_swish(in, f.back()));
  in = f.back();
  for (int i = static_cast<int>(f.size()) - 2; i >= 0; --i) {
    up_.push_back(register_module("up" + std::to_string(up_.size()), conv_bn_swish(in + f[i], f[i])));
    in = f[i];
  }
  output_ = register_module("output", nn::Conv2d(nn::Conv2dOptions(in, 1, 1)));
}

ModelOutput DenoisingUNet::forward(const Tensor& x) {
  check_input(x);
  std::vector<Tensor> skips;
  Tensor h = x;
  for (auto& d : down_) {
    h = d->forward(h);
    skips.push_back(h);
    h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
  }
  h = middle_->forward(h);
  ModelOutput out;
  out.latent = h;
  for (std::size_t i = 0; i < up_.size(); ++i) {
    h = upsample2(h);
    h = up_[i]->forward(torch::cat({h, skips[skips.size() - 1 - i]}, 1));
  }
  out.x_prior = torch::sigmoid(output_->forward(h));
  return out;
}

// --- Adversarial AE -----------------------------------------------------------------------

AdversarialAE::AdversarialAE(const BaselineConfig& cfg) : AnomalyModel(ModelSpec{cfg.kind, {}, cfg}) {
  cfg.validate();
  const int levels = log2_exact(cfg.resolution);
  const int stages = levels - 2;
  // First layers widen with resolution: doubled at 64, tripled at 128.
  const int widen = cfg.resolution >= 128 ? 3 : (cfg.resolution >= 64 ? 2 : 1);
  std::vector<int> f = cfg.filters;
  if (f.empty()) {
    f = strided_filters(stages, 32, 128);
    f[0] *= widen;
  }
  if (static_cast<int>(f.size()) != stages) throw ConfigError("aae needs " + std::to_string(stages) + " filters");
  latent_dim_ = cfg.latent_dim > 0 ? cfg.latent_dim : 32;
  const int64_t size = 4;

  auto conv_stack = [&](bool batch_norm) {
    nn::Sequential s;
    int64_t in = 1;
    for (int v : f) {
      s->push_back(nn::Conv2d(nn::Conv2dOptions(in, v, 4).stride(2).padding(1)));
      if (batch_norm) s->push_back(nn::BatchNorm2d(v));
      s->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
      in = v;
    }
    s->push_back(nn::Flatten());
    return s;
  };
  const int64_t flat = f.back() * size * size;

  encoder_ = conv_stack(true);
  encoder_->push_back(nn::Linear(flat, latent_dim_));

  generator_ = nn::Sequential(nn::Linear(latent_dim_, flat), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                              nn::Unflatten(nn::UnflattenOptions(1, {f.back(), size, size})));
  int64_t in = f.back();
  for (int i = stages - 1; i >= 0; --i) {
    int64_t out = i > 0 ? f[i - 1] : 32;
    add_up_block(generator_, in, out);
    in = out;
  }
  generator_->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
  generator_->push_back(nn::Sigmoid());

  discriminator_ = conv_stack(false);
  discriminator_->push_back(nn::Linear(flat, 64 * widen));
  discriminator_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  discriminator_->push_back(nn::Linear(64 * widen, 1));

  latent_discriminator_ = nn::Sequential(nn::Linear(latent_dim_, 128), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                                         nn::Linear(128, 128), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                                         nn::Linear(128, 1));

  register_module("encoder", encoder_);
  register_module("generator", generator_);
  register_module("discriminator", discriminator_);
  register_module("latent_discriminator", latent_discriminator_);
}

Tensor AdversarialAE::encode(const Tensor& x) { return encoder_->forward(x); }
Tensor AdversarialAE::generate(const Tensor& z) { return generator_->forward(z); }
Tensor AdversarialAE::discriminate(const Tensor& x) { return discriminator_->forward(x).squeeze(1); }
Tensor AdversarialAE::discriminate_latent(const Tensor& z) { return latent_discriminator_->forward(z).squeeze(1); }

ModelOutput AdversarialAE::forward(const Tensor& x) {
  check_input(x);
  ModelOutput out;
  out.latent = encode(x);
  out.x_prior = generate(out.latent);
  return out;
}

std::vector<Tensor> AdversarialAE::autoencoder_parameters() const { return collect({encoder_, generator_}); }
std::vector<Tensor> AdversarialAE::discriminator_parameters() const { return discriminator_->parameters(); }
std::vector<Tensor> AdversarialAE::latent_discriminator_parameters() const {
  return latent_discriminator_->parameters();
}

// --- Plain AE ---------------------------------------------------------------------------

PlainAE::PlainAE(const BaselineConfig& cfg) : AnomalyModel(ModelSpec{cfg.kind, {}, cfg}) {
  cfg.validate();
  const int levels = log2_exact(cfg.resolution);
  const int depth = cfg.depth > 0 ? cfg.depth : levels;
  std::vector<int> f = cfg.filters.empty() ? MorphAEusConfig::for_resolution(cfg.resolution).encoder_filters
                                           : cfg.filters;
  if (static_cast<int>(f.size()) < depth) throw ConfigError("plain-ae needs at least depth filter entries");
  f.resize(depth);
  int64_t in = 1;
  for (int i = 0; i < depth; ++i) {
    encoder_.push_back(register_module("encoder" + std::to_string(i), conv_bn_swish(in, f[i])));
    in = f[i];
  }
  for (int j = 0; j < depth; ++j) {
    int64_t out = f[std::max(depth - 2 - j, 0)];
    decoder_.push_back(register_module("decoder" + std::to_string(j), conv_bn_swish(in, out)));
    in = out;
  }
  output_ = register_module("output", nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
}

ModelOutput PlainAE::forward(const Tensor& x) {
  check_input(x);
  ModelOutput out;
  Tensor h = x;
  for (auto& e : encoder_) h = F::max_pool2d(e->forward(h), F::MaxPool2dFuncOptions(2));
  out.latent = h;
  for (auto& d : decoder_) h = d->forward(upsample2(h));
  out.x_prior = torch::sigmoid(output_->forward(h));
  return out;
}

// --- factories ------------------------------------------------------------------------------

std::shared_ptr<MorphAEus> build_morphaeus(const MorphAEusConfig& cfg) { return std::make_shared<MorphAEus>(cfg); }

ModelPtr build_baseline(ModelKind kind, BaselineConfig cfg) {
  cfg.kind = kind;
  if (kind == ModelKind::dae && cfg.noise.coarseness <= 0) cfg.noise.coarseness = std::max(1, cfg.resolution / 16);
  switch (kind) {
    case ModelKind::spatial_ae:
    case ModelKind::dense_ae: return std::make_shared<ConvAE>(cfg);
    case ModelKind::vae:
    case ModelKind::beta_vae: return std::make_shared<VAE>(cfg);
    case ModelKind::dae: return std::make_shared<DenoisingUNet>(cfg);
    case ModelKind::aae: return std::make_shared<AdversarialAE>(cfg);
    case ModelKind::plain_ae: return std::make_shared<PlainAE>(cfg);
    case ModelKind::morphaeus: break;
  }
  std::ostringstream os;
  os << "unsupported baseline kind '" << to_string(kind) << "'; supported:";
  for (const auto& n : supported_model_kinds()) {
    if (n != "morphaeus") os << " " << n;
  }
  throw ConfigError(os.str());
}

ModelPtr build_model(const ModelSpec& spec) {
  if (spec.kind == ModelKind::morphaeus) return build_morphaeus(spec.morphaeus);
  return build_baseline(spec.kind, spec.baseline);
}

Tensor pseudo_healthy(AnomalyModel& model, const Tensor& x) {
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard no_grad;
  Tensor out = model.forward(x).reconstruction();
  if (was_training) model.train();
  return out;
}

Tensor reconstruct_all(AnomalyModel& model, const Tensor& x, int64_t chunk) {
  std::vector<Tensor> parts;
  for (int64_t i = 0; i < x.size(0); i += chunk) {
    parts.push_back(pseudo_healthy(model, x.narrow(0, i, std::min(chunk, x.size(0) - i))));
  }
  return torch::cat(parts, 0);
}

}  // namespace morphaeus
