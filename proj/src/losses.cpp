#include "morphaeus/losses.hpp"

#include <cmath>

namespace morphaeus::losses {

namespace F = torch::nn::functional;

Tensor warp(const Tensor& image, const Tensor& field) {
  check_image_batch(image, "warp image");
  check_image_batch(field, "warp field");
  const int64_t n = image.size(0), c = image.size(1), h = image.size(2), w = image.size(3);
  if (field.size(0) != n || field.size(1) != 2 || field.size(2) != h || field.size(3) != w) {
    throw ShapeError("warp: field must be [N, 2, H, W] matching the image");
  }
  auto opts = field.options();
  auto cols = torch::arange(w, opts).view({1, 1, w});
  auto rows = torch::arange(h, opts).view({1, h, 1});
  auto sx = (cols + field.select(1, 0)).clamp(0, static_cast<double>(w - 1));
  auto sy = (rows + field.select(1, 1)).clamp(0, static_cast<double>(h - 1));

  auto x0f = sx.detach().floor();
  auto y0f = sy.detach().floor();
  auto wx = (sx - x0f).unsqueeze(1);
  auto wy = (sy - y0f).unsqueeze(1);
  // A NaN field must yield NaN pixels, not out-of-range gather indices.
  auto x0 = x0f.nan_to_num(0).to(torch::kLong);
  auto y0 = y0f.nan_to_num(0).to(torch::kLong);
  auto x1 = (x0 + 1).clamp_max(w - 1);
  auto y1 = (y0 + 1).clamp_max(h - 1);

  auto flat = image.reshape({n, c, h * w});
  auto fetch = [&](const Tensor& yi, const Tensor& xi) {
    auto idx = (yi * w + xi).view({n, 1, h * w}).expand({n, c, h * w});
    return flat.gather(2, idx).view({n, c, h, w});
  };
  auto top = (1 - wx) * fetch(y0, x0) + wx * fetch(y0, x1);
  auto bottom = (1 - wx) * fetch(y1, x0) + wx * fetch(y1, x1);
  return (1 - wy) * top + wy * bottom;
}

Tensor lncc(const Tensor& a, const Tensor& b, int window, double eps) {
  check_same_shape(a, b, "lncc");
  check_image_batch(a, "lncc");
  if (window < 1 || window % 2 == 0) throw ConfigError("lncc window must be a positive odd number");
  const int64_t c = a.size(1), h = a.size(2), w = a.size(3);
  if (window > h || window > w) throw ShapeError("lncc window larger than the image");

  // Five moment maps per channel, box-summed in one grouped convolution.
  auto moments = torch::cat({a, b, a * a, b * b, a * b}, 1);
  auto kernel = torch::ones({5 * c, 1, window, window}, a.options());
  auto conv = F::Conv2dFuncOptions().padding(window / 2).groups(5 * c);
  auto sums = F::conv2d(moments, kernel, conv);
  auto count = F::conv2d(torch::ones({1, 1, h, w}, a.options()), torch::ones({1, 1, window, window}, a.options()),
                         F::Conv2dFuncOptions().padding(window / 2));

  auto sa = sums.narrow(1, 0, c), sb = sums.narrow(1, c, c);
  auto saa = sums.narrow(1, 2 * c, c), sbb = sums.narrow(1, 3 * c, c), sab = sums.narrow(1, 4 * c, c);
  auto cross = sab - sa * sb / count;
  auto var_a = (saa - sa * sa / count).clamp_min(0);
  auto var_b = (sbb - sb * sb / count).clamp_min(0);
  auto ncc = cross / torch::sqrt(var_a * var_b + eps);
  return ncc.mean();
}

Tensor smoothness(const Tensor& field) {
  check_image_batch(field, "smoothness");
  auto total = torch::zeros({}, field.options());
  if (field.size(3) > 1) {
    auto dx = field.narrow(3, 1, field.size(3) - 1) - field.narrow(3, 0, field.size(3) - 1);
    total = total + dx.pow(2).sum(1).mean();
  }
  if (field.size(2) > 1) {
    auto dy = field.narrow(2, 1, field.size(2) - 1) - field.narrow(2, 0, field.size(2) - 1);
    total = total + dy.pow(2).sum(1).mean();
  }
  return total;
}

Tensor field_magnitude(const Tensor& field) {
  check_image_batch(field, "field_magnitude");
  return field.pow(2).sum(1).mean();
}

Tensor deformation_penalty(const Tensor& field, SmoothnessKind kind) {
  return kind == SmoothnessKind::gradient ? smoothness(field) : field_magnitude(field);
}

Tensor perceptual(const Tensor& x, const Tensor& y, const FeatureExtractor& f) {
  check_same_shape(x, y, "perceptual");
  auto fx = f.taps(x);
  auto fy = f.taps(y);
  auto total = torch::zeros({}, x.options());
  for (std::size_t i = 0; i < fx.size(); ++i) total = total + (fx[i] - fy[i]).pow(2).mean();
  return total;
}

Tensor perceptual_distance(const Tensor& x, const Tensor& y, const FeatureExtractor& f) {
  check_same_shape(x, y, "perceptual_distance");
  auto fx = f.taps(x);
  auto fy = f.taps(y);
  auto total = torch::zeros({x.size(0)}, x.options());
  for (std::size_t i = 0; i < fx.size(); ++i) {
    auto nx = fx[i] / (fx[i].pow(2).sum(1, true).sqrt() + 1e-10);
    auto ny = fy[i] / (fy[i].pow(2).sum(1, true).sqrt() + 1e-10);
    total = total + (nx - ny).pow(2).sum(1).mean({1, 2});
  }
  return total;
}

LossBreakdown morphaeus_objective(const Tensor& x, const ModelOutput& out, const MorphAEusLossOptions& opt,
                                  const FeatureExtractor* extractor) {
  if (opt.alpha < 0) throw ConfigError("alpha must be non-negative");
  if (opt.beta < 0) throw ConfigError("beta must be non-negative");
  check_same_shape(x, out.x_prior, "morphaeus_objective");

  LossBreakdown lb;
  lb.alpha = opt.alpha;
  lb.beta = opt.beta;

  auto mse = F::mse_loss(out.x_prior, x);
  Tensor total = mse;
  lb.mse = mse.item<double>();
  if (opt.alpha > 0) {
    if (!extractor) throw ConfigError("perceptual term requested but no feature extractor is loaded");
    auto pl = perceptual(x, out.x_prior, *extractor);
    lb.perceptual = pl.item<double>();
    total = total + opt.alpha * pl;
  }

  const bool deform = opt.use_warp && opt.epoch >= opt.start_epoch;
  if (deform) {
    if (!out.field || !out.x_warp) throw ShapeError("deformation terms need a field and a warped prior");
    auto lncc_term = 1.0 - lncc(*out.x_warp, x, opt.lncc_window);
    auto reg = deformation_penalty(*out.field, opt.smoothness);
    lb.lncc_term = lncc_term.item<double>();
    lb.smoothness = reg.item<double>();
    total = total + lncc_term + opt.beta * reg;
  }
  lb.total = total;
  return lb;
}

double beta_schedule(int epoch, int total_epochs, int start_epoch, double start, double end) {
  if (total_epochs <= start_epoch) {
    throw ConfigError("beta schedule needs total_epochs (" + std::to_string(total_epochs) +
                      ") greater than the deformation start epoch (" + std::to_string(start_epoch) + ")");
  }
  if (epoch <= start_epoch) return start;
  if (epoch >= total_epochs) return end;
  double t = static_cast<double>(epoch - start_epoch) / static_cast<double>(total_epochs - start_epoch);
  return start + t * (end - start);
}

Tensor kl_divergence(const Tensor& mu, const Tensor& logvar) {
  check_same_shape(mu, logvar, "kl_divergence");
  auto per_dim = 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar);
  return per_dim.flatten(1).sum(1).mean();
}

namespace {

Tensor summed_squared_error(const Tensor& x, const Tensor& recon) {
  check_same_shape(x, recon, "reconstruction");
  return (recon - x).pow(2).flatten(1).sum(1).mean();
}

}  // namespace

LossBreakdown elbo(const Tensor& x, const Tensor& recon, const Tensor& mu, const Tensor& logvar) {
  auto rec = summed_squared_error(x, recon);
  auto kl = kl_divergence(mu, logvar);
  LossBreakdown lb;
  lb.total = rec + kl;
  lb.mse = F::mse_loss(recon, x).item<double>();
  lb.extra["reconstruction"] = rec.item<double>();
  lb.extra["kl"] = kl.item<double>();
  return lb;
}

LossBreakdown beta_vae_objective(const Tensor& x, const Tensor& recon, const Tensor& mu, const Tensor& logvar,
                                 double gamma, double capacity) {
  auto rec = summed_squared_error(x, recon);
  auto kl = kl_divergence(mu, logvar);
  LossBreakdown lb;
  lb.total = rec + gamma * (kl - capacity).abs();
  lb.mse = F::mse_loss(recon, x).item<double>();
  lb.extra["reconstruction"] = rec.item<double>();
  lb.extra["kl"] = kl.item<double>();
  lb.extra["capacity"] = capacity;
  lb.extra["gamma"] = gamma;
  return lb;
}

double capacity_schedule(int epoch, int total_epochs, double c_max) {
  if (total_epochs <= 0) return c_max;
  double t = std::clamp(static_cast<double>(epoch) / total_epochs, 0.0, 1.0);
  return t * c_max;
}

AdversarialLosses adversarial_terms(const Tensor& real_logits, const Tensor& fake_logits) {
  AdversarialLosses out;
  out.generator = F::softplus(-fake_logits).mean();
  out.discriminator = 0.5 * (F::softplus(-real_logits).mean() + F::softplus(fake_logits).mean());
  return out;
}

}  // namespace morphaeus::losses
