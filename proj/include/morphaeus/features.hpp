#pragma once

#include "morphaeus/common.hpp"

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace morphaeus {

/// Frozen convolutional backbone with tapped intermediate activations.
///
/// `taps` feed the perceptual loss and perceptual distance; `pooled` is the
/// global-average-pooled output of a deeper layer and feeds the Fréchet distance.
/// The extractor is immutable after construction and safe to share between
/// threads for inference.
class FeatureExtractor {
 public:
  struct Options {
    std::string name;
    std::set<std::size_t> tap_layers;  // indices into the sequential stack (after the layer)
    std::size_t pooled_layer = 0;
    int input_channels = 1;     // grayscale is replicated when 3
    int native_size = 0;        // 0 keeps the input resolution
    bool imagenet_normalize = false;
  };

  FeatureExtractor(torch::nn::Sequential net, Options options);

  /// Deterministic frozen network that needs no downloaded weights. First-layer
  /// filters are zero-mean, so responses are driven by structure rather than by
  /// uniform intensity offsets.
  static FeatureExtractor builtin();

  /// ImageNet VGG16 `features` installed offline under `weights_dir`
  /// (`vgg16_features.pt` plus a `.sha256` sidecar). Throws ConfigError with
  /// installation instructions when missing or corrupt.
  static FeatureExtractor vgg16(const std::filesystem::path& weights_dir, int native_size = 224);

  /// "builtin" or "vgg16"; vgg16 reads the directory from $MORPHAEUS_WEIGHTS_DIR
  /// (default ~/.cache/morphaeus).
  static FeatureExtractor from_name(const std::string& name, int native_size = 224);
  static std::filesystem::path default_weights_dir();

  std::vector<Tensor> taps(const Tensor& x) const;
  Tensor pooled(const Tensor& x) const;  // [N, D]

  /// Copy with parameters converted to `dtype` (gradient checks run in double).
  FeatureExtractor to(torch::Dtype dtype) const;

  const std::string& name() const { return options_.name; }
  /// SHA-256 over the name and every parameter; stamped into reports.
  const std::string& hash() const { return hash_; }

 private:
  Tensor adapt(const Tensor& x) const;

  torch::nn::Sequential net_;
  Options options_;
  std::string hash_;
};

}  // namespace morphaeus
