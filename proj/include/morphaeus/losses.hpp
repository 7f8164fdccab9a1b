#pragma once

#include "morphaeus/common.hpp"
#include "morphaeus/features.hpp"
#include "morphaeus/model_output.hpp"

#include <map>
#include <string>

namespace morphaeus::losses {

/// Spatial transformer: output(p) = bilinear sample of `image` at p + field(p).
/// `field` is [N, 2, H, W] with channel 0 the column (x) displacement and channel 1
/// the row (y) displacement, in pixels. Sample positions are clamped to the image
/// border. Differentiable with respect to both arguments.
Tensor warp(const Tensor& image, const Tensor& field);

/// Mean local normalized cross-correlation over all pixels.
///
/// Each pixel's window is clipped to the image. Per window,
///   ncc = cov / sqrt(var_a * var_b + eps)
/// with cov and var taken as centred sums over the window. Range [-1, 1].
Tensor lncc(const Tensor& a, const Tensor& b, int window = 9, double eps = 1e-5);

enum class SmoothnessKind { gradient, magnitude };

/// Diffusion regularizer: mean over forward differences of sum_c (d/dx phi_c)^2 plus
/// the same along y. Zero iff the field is spatially constant.
Tensor smoothness(const Tensor& field);
/// Mean over pixels of sum_c phi_c^2.
Tensor field_magnitude(const Tensor& field);
Tensor deformation_penalty(const Tensor& field, SmoothnessKind kind);

/// Sum over tapped layers of the mean squared feature difference.
Tensor perceptual(const Tensor& x, const Tensor& y, const FeatureExtractor& f);

/// Per-sample perceptual distance from channel-normalized tapped features (an
/// LPIPS-style distance without learned weights). Returns [N].
Tensor perceptual_distance(const Tensor& x, const Tensor& y, const FeatureExtractor& f);

struct LossBreakdown {
  Tensor total;  // differentiable objective
  double mse = 0.0;
  double perceptual = 0.0;
  double lncc_term = 0.0;  // 1 - mean LNCC
  double smoothness = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  std::map<std::string, double> extra;  // baseline-specific terms

  double value() const { return total.item<double>(); }
};

struct MorphAEusLossOptions {
  double alpha = 0.05;
  double beta = 1e-3;
  int epoch = 0;
  int start_epoch = 10;
  int lncc_window = 9;
  SmoothnessKind smoothness = SmoothnessKind::gradient;
  bool use_warp = true;  // false trains the prior only
};

/// L_rec + L_warp:
///   MSE(x, x_prior) + alpha * PL(x, x_prior) + (1 - LNCC(x_warp, x)) + beta * R(field).
/// The deformation terms are exactly zero while epoch < start_epoch (or when
/// use_warp is false). `extractor` may be null when alpha == 0.
LossBreakdown morphaeus_objective(const Tensor& x, const ModelOutput& out, const MorphAEusLossOptions& opt,
                                  const FeatureExtractor* extractor);

/// Linear ramp from `start` at start_epoch to `end` at total_epochs, clamped outside.
double beta_schedule(int epoch, int total_epochs, int start_epoch = 10, double start = 1e-3, double end = 3.0);

/// Closed-form KL(N(mu, exp(logvar)) || N(0, I)), summed over latent dims, averaged over the batch.
Tensor kl_divergence(const Tensor& mu, const Tensor& logvar);

/// Negative ELBO: per-image summed squared error plus KL, averaged over the batch.
LossBreakdown elbo(const Tensor& x, const Tensor& recon, const Tensor& mu, const Tensor& logvar);

/// Capacity-controlled beta-VAE: reconstruction + gamma * |KL - C|.
LossBreakdown beta_vae_objective(const Tensor& x, const Tensor& recon, const Tensor& mu, const Tensor& logvar,
                                 double gamma, double capacity);

/// Linear capacity ramp 0 -> c_max over [0, total_epochs].
double capacity_schedule(int epoch, int total_epochs, double c_max);

struct AdversarialLosses {
  Tensor generator;      // non-saturating: -log sigmoid(fake)
  Tensor discriminator;  // mean of -log sigmoid(real) and -log(1 - sigmoid(fake))
};

AdversarialLosses adversarial_terms(const Tensor& real_logits, const Tensor& fake_logits);

}  // namespace morphaeus::losses
