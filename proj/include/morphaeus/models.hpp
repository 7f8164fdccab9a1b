#pragma once

#include "morphaeus/common.hpp"
#include "morphaeus/datasets.hpp"
#include "morphaeus/losses.hpp"
#include "morphaeus/model_output.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace morphaeus {

enum class ModelKind { morphaeus, spatial_ae, dense_ae, vae, beta_vae, dae, aae, plain_ae };

std::string to_string(ModelKind kind);
/// Accepts the dashed names (spatial-ae, beta-vae, ...). Unknown names raise
/// ConfigError listing the supported kinds.
ModelKind parse_model_kind(const std::string& name);
std::vector<std::string> supported_model_kinds();

struct MorphAEusConfig {
  int resolution = 128;
  std::vector<int> encoder_filters{16, 32, 64, 128, 256, 256, 256};
  int latent_channels = 128;
  int head_filters = 32;
  int head_layers = 3;
  double alpha = 0.05;
  double beta_start = 1e-3;
  double beta_end = 3.0;
  int deformation_start_epoch = 10;
  double max_displacement = 8.0;  // pixels at 128 x 128, scaled linearly with resolution
  int lncc_window = 9;
  losses::SmoothnessKind smoothness = losses::SmoothnessKind::gradient;
  bool stop_warp_gradient_at_prior = true;
  bool use_warp = true;

  /// Default filters truncated from the front so that every stage halves down to 1 x 1.
  static MorphAEusConfig for_resolution(int resolution);
  /// One max-pool per encoder stage: depth == log2(resolution).
  int expected_depth() const;
  void validate() const;
  double max_displacement_pixels() const { return max_displacement * resolution / 128.0; }

  nlohmann::json to_json() const;
  static MorphAEusConfig from_json(const nlohmann::json& j);
};

struct BaselineConfig {
  ModelKind kind = ModelKind::spatial_ae;
  int resolution = 64;
  std::vector<int> filters;  // empty: per-kind default
  int latent_dim = 0;        // 0: per-kind default (vae 512, dense-ae 512, beta-vae 32, aae 32)
  int latent_channels = 16;  // spatial-ae bottleneck channels
  int depth = 0;             // plain-ae pooling stages; 0 means log2(resolution)
  data::NoiseSpec noise{0.2, 0};  // dae corruption; coarseness 0 means resolution / 16
  double beta_vae_beta = 4.0;
  double gamma = 10.0;
  double capacity_max = 50.0;
  double aae_error_weight = 2.0;
  double aae_adv_dz_weight = 2.0;

  void validate() const;
  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
};

/// Everything needed to rebuild a model: stored in checkpoints.
struct ModelSpec {
  ModelKind kind = ModelKind::morphaeus;
  MorphAEusConfig morphaeus;
  BaselineConfig baseline;

  int resolution() const { return kind == ModelKind::morphaeus ? morphaeus.resolution : baseline.resolution; }
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

/// Uniform forward contract for every model in the zoo.
class AnomalyModel : public torch::nn::Module {
 public:
  explicit AnomalyModel(ModelSpec spec) : spec_(std::move(spec)) {}
  ~AnomalyModel() override = default;

  virtual ModelOutput forward(const Tensor& x) = 0;

  const ModelSpec& spec() const { return spec_; }
  ModelKind kind() const { return spec_.kind; }
  int resolution() const { return spec_.resolution(); }

 protected:
  void check_input(const Tensor& x) const;

 private:
  ModelSpec spec_;
};

using ModelPtr = std::shared_ptr<AnomalyModel>;

class MorphAEus : public AnomalyModel {
 public:
  explicit MorphAEus(const MorphAEusConfig& cfg);
  ModelOutput forward(const Tensor& x) override;

  const MorphAEusConfig& config() const { return spec().morphaeus; }
  /// Parameters of the deformation estimation network only.
  std::vector<Tensor> head_parameters() const;

 private:
  std::vector<torch::nn::Sequential> encoder_;
  torch::nn::Conv2d projection_{nullptr};
  std::vector<torch::nn::Sequential> decoder_;
  torch::nn::Conv2d output_{nullptr};
  torch::nn::Sequential head_{nullptr};
  torch::nn::Conv2d head_out_{nullptr};
  int shared_encoder_stage_ = 0;
  int shared_decoder_stage_ = 0;
};

/// Stride-2 conv auto-encoder. Spatial variant keeps an (R/8)^2 x C bottleneck; the
/// dense variant flattens to a vector.
class ConvAE : public AnomalyModel {
 public:
  explicit ConvAE(const BaselineConfig& cfg);
  ModelOutput forward(const Tensor& x) override;

 private:
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential bottleneck_in_{nullptr};
  torch::nn::Sequential bottleneck_out_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
  int64_t feature_channels_ = 0;
  int64_t feature_size_ = 0;
};

/// Gaussian VAE; also hosts the capacity-controlled beta-VAE architecture.
class VAE : public AnomalyModel {
 public:
  explicit VAE(const BaselineConfig& cfg);
  ModelOutput forward(const Tensor& x) override;

 private:
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential hidden_{nullptr};
  torch::nn::Linear mu_{nullptr};
  torch::nn::Linear logvar_{nullptr};
  torch::nn::Sequential expand_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
  int64_t feature_channels_ = 0;
  int64_t feature_size_ = 0;
};

/// U-Net with skip connections, trained to remove coarse noise.
class DenoisingUNet : public AnomalyModel {
 public:
  explicit DenoisingUNet(const BaselineConfig& cfg);
  ModelOutput forward(const Tensor& x) override;

 private:
  std::vector<torch::nn::Sequential> down_;
  torch::nn::Sequential middle_{nullptr};
  std::vector<torch::nn::Sequential> up_;
  torch::nn::Conv2d output_{nullptr};
};

/// Adversarial auto-encoder with an image discriminator and a latent discriminator.
class AdversarialAE : public AnomalyModel {
 public:
  explicit AdversarialAE(const BaselineConfig& cfg);
  ModelOutput forward(const Tensor& x) override;

  Tensor encode(const Tensor& x);
  Tensor generate(const Tensor& z);
  Tensor discriminate(const Tensor& x);
  Tensor discriminate_latent(const Tensor& z);
  int64_t latent_dim() const { return latent_dim_; }

  std::vector<Tensor> autoencoder_parameters() const;
  std::vector<Tensor> discriminator_parameters() const;
  std::vector<Tensor> latent_discriminator_parameters() const;

 private:
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential generator_{nullptr};
  torch::nn::Sequential discriminator_{nullptr};
  torch::nn::Sequential latent_discriminator_{nullptr};
  int64_t latent_dim_ = 32;
};

/// Plain max-pool/bilinear auto-encoder with a configurable number of stages; the
/// bottleneck keeps (R / 2^depth)^2 spatial extent.
class PlainAE : public AnomalyModel {
 public:
  explicit PlainAE(const BaselineConfig& cfg);
  ModelOutput forward(const Tensor& x) override;

 private:
  std::vector<torch::nn::Sequential> encoder_;
  std::vector<torch::nn::Sequential> decoder_;
  torch::nn::Conv2d output_{nullptr};
};

std::shared_ptr<MorphAEus> build_morphaeus(const MorphAEusConfig& cfg);
ModelPtr build_baseline(ModelKind kind, BaselineConfig cfg);
ModelPtr build_model(const ModelSpec& spec);

/// Evaluation-mode reconstruction without gradients: x_warp for MorphAEus, the
/// single output for baselines.
Tensor pseudo_healthy(AnomalyModel& model, const Tensor& x);

/// pseudo_healthy over a large batch in chunks.
Tensor reconstruct_all(AnomalyModel& model, const Tensor& x, int64_t chunk = 64);

}  // namespace morphaeus
