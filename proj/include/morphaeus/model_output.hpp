#pragma once

#include "morphaeus/common.hpp"

#include <optional>
#include <vector>

namespace morphaeus {

/// Result of a model forward pass.
///
/// MorphAEus fills every slot. Baselines without a deformation head leave
/// `field` and `x_warp` empty; their single output sits in `x_prior`.
struct ModelOutput {
  Tensor x_prior;                // decoder output, same shape as the input
  std::optional<Tensor> field;   // [N, 2, H, W] displacement in pixels (x, y)
  std::optional<Tensor> x_warp;  // x_prior resampled along field
  Tensor latent;                 // bottleneck code
  std::vector<Tensor> shared;    // encoder/decoder features consumed by the deformation head
  std::optional<Tensor> mu;      // Gaussian posterior (VAE family)
  std::optional<Tensor> logvar;

  /// The image used for residual scoring: x_warp when present, otherwise x_prior.
  const Tensor& reconstruction() const { return x_warp ? *x_warp : x_prior; }
};

}  // namespace morphaeus
