#pragma once

// Reference implementations written directly from the definitions, without
// sharing code with the library. Slow on purpose: loops over pixels and pairs.

#include <torch/torch.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

/// Bilinear sample of a [H, W] image at (x, y), coordinates clamped to the border.
inline double bilinear(const std::vector<double>& img, int h, int w, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int r, int c) { return img[static_cast<std::size_t>(r) * w + c]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

/// Warp of a single-channel [1, 1, H, W] image by a [1, 2, H, W] field (x then y).
inline torch::Tensor warp(const torch::Tensor& image, const torch::Tensor& field) {
  const int h = static_cast<int>(image.size(2)), w = static_cast<int>(image.size(3));
  auto im = image.to(torch::kDouble).contiguous();
  auto fd = field.to(torch::kDouble).contiguous();
  std::vector<double> pix(im.data_ptr<double>(), im.data_ptr<double>() + h * w);
  auto f = fd.accessor<double, 4>();
  auto out = torch::zeros({1, 1, h, w}, torch::kDouble);
  auto o = out.accessor<double, 4>();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) o[0][0][r][c] = bilinear(pix, h, w, c + f[0][0][r][c], r + f[0][1][r][c]);
  }
  return out;
}

/// Mean windowed NCC of two [1, 1, H, W] images, windows clipped at the border.
inline double lncc(const torch::Tensor& a, const torch::Tensor& b, int window, double eps = 1e-5) {
  const int h = static_cast<int>(a.size(2)), w = static_cast<int>(a.size(3)), half = window / 2;
  const auto ta = a.to(torch::kDouble).contiguous(), tb = b.to(torch::kDouble).contiguous();
  auto A = ta.accessor<double, 4>();
  auto B = tb.accessor<double, 4>();
  double total = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::vector<double> va, vb;
      for (int i = std::max(0, r - half); i <= std::min(h - 1, r + half); ++i) {
        for (int j = std::max(0, c - half); j <= std::min(w - 1, c + half); ++j) {
          va.push_back(A[0][0][i][j]);
          vb.push_back(B[0][0][i][j]);
        }
      }
      double ma = 0, mb = 0;
      for (std::size_t k = 0; k < va.size(); ++k) {
        ma += va[k];
        mb += vb[k];
      }
      ma /= static_cast<double>(va.size());
      mb /= static_cast<double>(vb.size());
      double cov = 0, xa = 0, xb = 0;
      for (std::size_t k = 0; k < va.size(); ++k) {
        cov += (va[k] - ma) * (vb[k] - mb);
        xa += (va[k] - ma) * (va[k] - ma);
        xb += (vb[k] - mb) * (vb[k] - mb);
      }
      total += cov / std::sqrt(xa * xb + eps);
    }
  }
  return total / (h * w);
}

/// SSIM of two [H, W] images with a Gaussian window, evaluated window by window.
inline double ssim(const torch::Tensor& a, const torch::Tensor& b, int window = 11, double sigma = 1.5) {
  const auto ta = a.to(torch::kDouble).contiguous().view({a.size(-2), a.size(-1)});
  const auto tb = b.to(torch::kDouble).contiguous().view({b.size(-2), b.size(-1)});
  auto A = ta.accessor<double, 2>();
  auto B = tb.accessor<double, 2>();
  const int h = static_cast<int>(a.size(-2)), w = static_cast<int>(a.size(-1));
  std::vector<double> g(window);
  double gs = 0;
  for (int i = 0; i < window; ++i) {
    const double d = i - (window - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (int r = 0; r + window <= h; ++r) {
    for (int c = 0; c + window <= w; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
          mx += g[i] * g[j] * A[r + i][c + j];
          my += g[i] * g[j] * B[r + i][c + j];
        }
      }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
          const double wt = g[i] * g[j];
          vx += wt * (A[r + i][c + j] - mx) * (A[r + i][c + j] - mx);
          vy += wt * (B[r + i][c + j] - my) * (B[r + i][c + j] - my);
          cxy += wt * (A[r + i][c + j] - mx) * (B[r + i][c + j] - my);
        }
      }
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

/// O(n^2) pairwise AUROC with ties counted 1/2.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1;
      if (scores[i] > scores[j]) wins += 1;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Lowest FPR over every candidate threshold t (predict score >= t) reaching the TPR target.
inline double fpr_at_tpr(const std::vector<double>& scores, const std::vector<int>& labels, double target) {
  double best = 1.0;
  std::vector<double> thresholds = scores;
  thresholds.push_back(std::numeric_limits<double>::infinity());
  for (double t : thresholds) {
    double tp = 0, fp = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      (labels[i] == 1 ? p : n) += 1;
      if (scores[i] >= t) (labels[i] == 1 ? tp : fp) += 1;
    }
    if (tp / p >= target) best = std::min(best, fp / n);
  }
  return best;
}

/// Average precision summed over distinct thresholds in descending order.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> t = scores;
  std::sort(t.begin(), t.end(), std::greater<>());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  double p = 0;
  for (int l : labels) p += l;
  double ap = 0, prev = 0;
  for (double thr : t) {
    double tp = 0, pred = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= thr) {
        pred += 1;
        tp += labels[i];
      }
    }
    ap += (tp / p - prev) * (tp / pred);
    prev = tp / p;
  }
  return ap;
}

/// Symmetric PSD square root through an eigendecomposition.
inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Fréchet distance with Tr((S_a S_b)^1/2) = Tr((S_a^1/2 S_b S_a^1/2)^1/2).
inline double frechet(const Eigen::VectorXd& ma, const Eigen::MatrixXd& sa, const Eigen::VectorXd& mb,
                      const Eigen::MatrixXd& sb) {
  Eigen::MatrixXd ra = sqrt_psd(sa);
  Eigen::MatrixXd inner = ra * sb * ra;
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2 * sqrt_psd(inner).trace();
}

/// Central finite-difference gradient of a scalar function of a double tensor.
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                      double h = 1e-6) {
  auto base = x.detach().clone().contiguous();
  auto grad = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto g = grad.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double v = flat[i].item<double>();
    flat[i] = v + h;
    const double up = f(base);
    flat[i] = v - h;
    const double down = f(base);
    flat[i] = v;
    g[i] = (up - down) / (2 * h);
  }
  return grad;
}

/// ||a - b|| / max(||b||, tiny).
inline double relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
  const double denom = std::max(numeric.norm().item<double>(), 1e-12);
  return (analytic - numeric).norm().item<double>() / denom;
}

}  // namespace oracle
