#include "morphaeus/datasets.hpp"

#include "morphaeus/imaging.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

namespace morphaeus::data {

namespace fs = std::filesystem;

SplitCounts split_counts(std::size_t n) {
  SplitCounts c;
  c.val = n / 10;
  c.test = n / 10;
  c.train = n - c.val - c.test;
  return c;
}

namespace {

nlohmann::json ids(const std::vector<Sample>& samples) {
  auto arr = nlohmann::json::array();
  for (const auto& s : samples) arr.push_back(s.id);
  return arr;
}

std::vector<Sample> filter(const std::vector<Sample>& samples, const std::string& label) {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.label == label) out.push_back(s);
  }
  return out;
}

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".pgm"};
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return exts.count(e) > 0;
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void require_root(const fs::path& root) {
  if (!fs::exists(root) || !fs::is_directory(root)) {
    throw ConfigError("dataset root does not exist: " + root.string());
  }
}

}  // namespace

nlohmann::json DatasetSplit::manifest() const {
  nlohmann::json j;
  j["train"] = ids(train);
  j["val"] = ids(val);
  j["test"] = ids(test);
  j["skipped"] = skipped;
  j["resolution"] = resolution;
  j["seed"] = seed;
  return j;
}

std::string DatasetSplit::manifest_hash() const { return sha256_hex(manifest().dump()); }

void DatasetSplit::write_manifest(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write manifest " + path.string());
  os << manifest().dump(2) << "\n";
}

std::vector<Sample> DatasetSplit::train_with_label(const std::string& label) const { return filter(train, label); }
std::vector<Sample> DatasetSplit::val_with_label(const std::string& label) const { return filter(val, label); }
std::vector<Sample> DatasetSplit::test_with_label(const std::string& label) const { return filter(test, label); }

std::vector<std::string> DatasetSplit::labels() const {
  std::set<std::string> s;
  for (const auto* part : {&train, &val, &test}) {
    for (const auto& x : *part) s.insert(x.label);
  }
  return {s.begin(), s.end()};
}

std::vector<std::string> list_classes(const fs::path& root) {
  require_root(root);
  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename() != "masks") {
      classes.push_back(entry.path().filename().string());
    }
  }
  std::sort(classes.begin(), classes.end());
  return classes;
}

DatasetSplit load_image_folder(const fs::path& root, int resolution, std::uint64_t seed) {
  if (resolution <= 0) throw ConfigError("resolution must be positive");
  auto classes = list_classes(root);
  if (classes.empty()) throw ConfigError("dataset root has no class directories: " + root.string());

  DatasetSplit split;
  split.resolution = resolution;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  std::size_t total = 0;

  for (const auto& cls : classes) {
    std::vector<Sample> loaded;
    for (const auto& file : sorted_images(root / cls)) {
      std::string rel = (fs::path(cls) / file.filename()).generic_string();
      try {
        loaded.push_back({rel, cls, imaging::read_grayscale(file, resolution)});
      } catch (const Error& e) {
        spdlog::warn("skipping unreadable image {}: {}", rel, e.what());
        split.skipped.push_back(rel);
      }
    }
    std::shuffle(loaded.begin(), loaded.end(), rng);
    auto counts = split_counts(loaded.size());
    auto it = loaded.begin();
    split.train.insert(split.train.end(), it, it + counts.train);
    it += counts.train;
    split.val.insert(split.val.end(), it, it + counts.val);
    it += counts.val;
    split.test.insert(split.test.end(), it, it + counts.test);
    total += loaded.size();
  }
  if (total == 0) throw ConfigError("dataset root contains no readable images: " + root.string());
  return split;
}

DatasetSplit split_samples(std::vector<Sample> samples, int resolution, std::uint64_t seed) {
  DatasetSplit split;
  split.resolution = resolution;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  std::map<std::string, std::vector<Sample>> by_label;
  for (auto& s : samples) by_label[s.label].push_back(std::move(s));
  for (auto& [label, group] : by_label) {
    std::shuffle(group.begin(), group.end(), rng);
    auto counts = split_counts(group.size());
    auto it = group.begin();
    split.train.insert(split.train.end(), it, it + counts.train);
    it += counts.train;
    split.val.insert(split.val.end(), it, it + counts.val);
    it += counts.val;
    split.test.insert(split.test.end(), it, it + counts.test);
  }
  return split;
}

std::vector<Sample> sample_ood(const fs::path& root, const std::string& class_name, std::size_t n,
                               std::uint64_t seed, int resolution) {
  require_root(root);
  fs::path dir = root / class_name;
  if (!fs::is_directory(dir)) throw ConfigError("class not found: " + class_name + " under " + root.string());
  auto files = sorted_images(dir);
  if (n > files.size()) {
    throw ConfigError("class " + class_name + " has " + std::to_string(files.size()) + " images, " +
                      std::to_string(n) + " requested (short by " + std::to_string(n - files.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(files.begin(), files.end(), rng);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < files.size() && out.size() < n; ++i) {
    std::string rel = (fs::path(class_name) / files[i].filename()).generic_string();
    try {
      out.push_back({rel, class_name, imaging::read_grayscale(files[i], resolution)});
    } catch (const Error& e) {
      spdlog::warn("skipping unreadable image {}: {}", rel, e.what());
    }
  }
  if (out.size() < n) {
    throw ConfigError("class " + class_name + " has only " + std::to_string(out.size()) +
                      " readable images, " + std::to_string(n) + " requested");
  }
  return out;
}

Tensor stack(const std::vector<Sample>& samples) {
  if (samples.empty()) throw ShapeError("cannot stack an empty sample list");
  std::vector<Tensor> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  return torch::stack(images);
}

Tensor stack(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ShapeError("cannot stack an empty index list");
  std::vector<Tensor> images;
  images.reserve(indices.size());
  for (auto i : indices) images.push_back(samples.at(i).image);
  return torch::stack(images);
}

// --- synthetic -------------------------------------------------------------

namespace {

using Image = std::vector<float>;

double smoothstep(double edge0, double edge1, double x) {
  double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

/// Smooth random field: Gaussian values on a (cells+1)^2 lattice, bilinearly interpolated.
Image smooth_texture(int res, int cells, double amplitude, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> lattice((cells + 1) * (cells + 1));
  for (auto& v : lattice) v = normal(rng);
  Image out(static_cast<std::size_t>(res) * res);
  for (int i = 0; i < res; ++i) {
    double gy = (i + 0.5) / res * cells;
    int y0 = std::min(static_cast<int>(gy), cells - 1);
    double fy = gy - y0;
    for (int j = 0; j < res; ++j) {
      double gx = (j + 0.5) / res * cells;
      int x0 = std::min(static_cast<int>(gx), cells - 1);
      double fx = gx - x0;
      auto at = [&](int y, int x) { return lattice[y * (cells + 1) + x]; };
      double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                 fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      out[i * res + j] = static_cast<float>(amplitude * v);
    }
  }
  return out;
}

Tensor to_tensor(const Image& img, int res) {
  auto t = torch::from_blob(const_cast<float*>(img.data()), {1, res, res}, torch::kFloat32).clone();
  return t.clamp(0.0, 1.0);
}

struct Ellipse {
  double cx, cy, ax, ay, angle;
  /// Normalized radius: < 1 inside.
  double radius(double x, double y) const {
    double c = std::cos(angle), s = std::sin(angle);
    double dx = x - cx, dy = y - cy;
    double u = (c * dx + s * dy) / ax;
    double v = (-s * dx + c * dy) / ay;
    return std::sqrt(u * u + v * v);
  }
};

struct LungScene {
  Image image;
  Ellipse lungs[2];
};

LungScene lung_scene(int res, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  LungScene scene;
  Image texture = smooth_texture(res, 6, 0.05, rng);
  Image fine = smooth_texture(res, 16, 0.02, rng);
  double body = 0.62 + 0.06 * jitter(rng);
  double lung_depth = 0.32 + 0.05 * jitter(rng);
  double rib_phase = 0.35 * std::numbers::pi * jitter(rng);
  double rib_freq = 5.0 + 0.3 * jitter(rng);
  for (int k = 0; k < 2; ++k) {
    double side = k == 0 ? -1.0 : 1.0;
    scene.lungs[k] = Ellipse{(0.5 + side * 0.2 + 0.05 * jitter(rng)) * res,
                             (0.52 + 0.06 * jitter(rng)) * res,
                             (0.13 + 0.025 * jitter(rng)) * res,
                             (0.30 + 0.05 * jitter(rng)) * res,
                             side * 0.12 + 0.15 * jitter(rng)};
  }
  // Smooth elastic displacement of the anatomy (lung outlines and ribs): a few
  // low-frequency plane waves, up to ~4% of the image size. Texture is not displaced.
  struct Wave {
    double kx, ky, phase, ax, ay;
  };
  std::vector<Wave> waves(3);
  for (auto& w : waves) {
    const double freq = 2.0 * std::numbers::pi * (1.0 + jitter(rng) * 0.5 + 1.0) / res;
    const double dir = std::numbers::pi * jitter(rng);
    w = {freq * std::cos(dir), freq * std::sin(dir), std::numbers::pi * jitter(rng), 0.025 * res * jitter(rng),
         0.025 * res * jitter(rng)};
  }
  const double edge = 1.5 / (0.13 * res);
  scene.image.resize(static_cast<std::size_t>(res) * res);
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      double x = j + 0.5, y = i + 0.5;
      double v = body - 0.12 * (static_cast<double>(i) / res - 0.5);
      for (const auto& w : waves) {
        const double s = std::sin(w.kx * (j + 0.5) + w.ky * (i + 0.5) + w.phase);
        x += w.ax * s;
        y += w.ay * s;
      }
      double inside = 0.0;
      for (const auto& lung : scene.lungs) {
        inside = std::max(inside, 1.0 - smoothstep(1.0 - edge, 1.0 + edge, lung.radius(x, y)));
      }
      double ribs = 0.07 * std::sin(2.0 * std::numbers::pi * rib_freq * y / res + rib_phase);
      v -= inside * (lung_depth - ribs);
      std::size_t p = static_cast<std::size_t>(i) * res + j;
      v += texture[p] + inside * fine[p];
      scene.image[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return scene;
}

}  // namespace

SyntheticDataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.resolution < 16) throw ConfigError("synthetic resolution must be at least 16");
  if (spec.n_normal < 0 || spec.n_anomalous < 0) throw ConfigError("synthetic counts must be non-negative");
  if (spec.anomaly.radius_min <= 0 || spec.anomaly.radius_max < spec.anomaly.radius_min) {
    throw ConfigError("invalid anomaly radius range");
  }
  if (spec.anomaly.intensity_delta < 0 || spec.anomaly.intensity_delta > 1) {
    throw ConfigError("anomaly intensity delta must lie in [0, 1]");
  }
  const int res = spec.resolution;
  std::mt19937_64 rng(spec.texture_seed);

  SyntheticDataset out;
  out.split.resolution = res;
  out.split.seed = spec.texture_seed;

  std::vector<Sample> normals;
  for (int n = 0; n < spec.n_normal; ++n) {
    auto scene = lung_scene(res, rng);
    normals.push_back({"normal/" + std::to_string(n), "normal", to_tensor(scene.image, res)});
  }
  auto counts = split_counts(normals.size());
  out.split.train.assign(normals.begin(), normals.begin() + counts.train);
  out.split.val.assign(normals.begin() + counts.train, normals.begin() + counts.train + counts.val);
  out.split.test.assign(normals.begin() + counts.train + counts.val, normals.end());
  for (const auto& s : out.split.test) {
    out.masks.push_back(torch::zeros_like(s.image));
    out.counterparts.push_back(s.image);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int n = 0; n < spec.n_anomalous; ++n) {
    auto scene = lung_scene(res, rng);
    Image anomalous = scene.image;
    Image mask(anomalous.size(), 0.0f);
    const Ellipse& lung = scene.lungs[unit(rng) < 0.5 ? 0 : 1];
    double radius = spec.anomaly.radius_min + unit(rng) * (spec.anomaly.radius_max - spec.anomaly.radius_min);
    // Centre sampled uniformly inside the inner 60% of the ellipse.
    double rho = 0.6 * std::sqrt(unit(rng)), theta = 2.0 * std::numbers::pi * unit(rng);
    double u = rho * std::cos(theta) * lung.ax, v = rho * std::sin(theta) * lung.ay;
    double cx = lung.cx + std::cos(lung.angle) * u - std::sin(lung.angle) * v;
    double cy = lung.cy + std::sin(lung.angle) * u + std::cos(lung.angle) * v;
    for (int i = 0; i < res; ++i) {
      for (int j = 0; j < res; ++j) {
        double dx = j + 0.5 - cx, dy = i + 0.5 - cy;
        if (dx * dx + dy * dy <= radius * radius) {
          std::size_t p = static_cast<std::size_t>(i) * res + j;
          mask[p] = 1.0f;
          anomalous[p] = static_cast<float>(std::min(1.0, anomalous[p] + spec.anomaly.intensity_delta));
        }
      }
    }
    out.split.test.push_back({"anomalous/" + std::to_string(n), "anomalous", to_tensor(anomalous, res)});
    out.masks.push_back(to_tensor(mask, res));
    out.counterparts.push_back(to_tensor(scene.image, res));
  }
  return out;
}

ShapeKind parse_shape_kind(const std::string& name) {
  if (name == "circles") return ShapeKind::circles;
  if (name == "squares") return ShapeKind::squares;
  if (name == "crosses") return ShapeKind::crosses;
  throw ConfigError("unknown shape class '" + name + "' (expected circles, squares or crosses)");
}

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circles: return "circles";
    case ShapeKind::squares: return "squares";
    case ShapeKind::crosses: return "crosses";
  }
  return "unknown";
}

std::vector<Sample> make_shapes(ShapeKind kind, int n, int resolution, std::uint64_t seed) {
  if (resolution < 16) throw ConfigError("synthetic resolution must be at least 16");
  if (n < 0) throw ConfigError("shape count must be non-negative");
  const int res = resolution;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Sample> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    Image img = smooth_texture(res, 6, 0.05, rng);
    double base = 0.3 + 0.1 * unit(rng);
    for (auto& v : img) v += static_cast<float>(base);
    for (int s = 0; s < 2; ++s) {
      double r = (0.12 + 0.06 * unit(rng)) * res;
      // Left and right halves so the two shapes rarely overlap.
      double cx = ((s == 0 ? 0.28 : 0.72) + 0.08 * (unit(rng) - 0.5)) * res;
      double cy = (0.5 + 0.3 * (unit(rng) - 0.5)) * res;
      double level = 0.35 + 0.1 * unit(rng);
      for (int i = 0; i < res; ++i) {
        for (int j = 0; j < res; ++j) {
          double dx = std::abs(j + 0.5 - cx), dy = std::abs(i + 0.5 - cy);
          bool inside = false;
          switch (kind) {
            case ShapeKind::circles: inside = dx * dx + dy * dy <= r * r; break;
            case ShapeKind::squares: inside = dx <= r && dy <= r; break;
            case ShapeKind::crosses:
              inside = (dx <= 0.35 * r && dy <= 1.1 * r) || (dy <= 0.35 * r && dx <= 1.1 * r);
              break;
          }
          if (inside) img[static_cast<std::size_t>(i) * res + j] += static_cast<float>(level);
        }
      }
    }
    out.push_back({to_string(kind) + "/" + std::to_string(k), to_string(kind), to_tensor(img, res)});
  }
  return out;
}

void write_samples(const std::vector<Sample>& samples, const fs::path& root) {
  for (const auto& s : samples) {
    fs::path name = fs::path(s.id).filename();
    imaging::write_png(root / s.label / (name.string() + ".png"), s.image);
  }
}

void write_synthetic(const SyntheticDataset& data, const fs::path& root) {
  const auto& split = data.split;
  write_samples(split.train, root);
  write_samples(split.val, root);
  write_samples(split.test, root);
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    if (split.test[i].label != "anomalous") continue;
    fs::path name = fs::path(split.test[i].id).filename();
    imaging::write_png(root / "masks" / (name.string() + ".png"), data.masks[i]);
  }
  // Manifest entries point at the files written above.
  DatasetSplit on_disk = split;
  for (auto* part : {&on_disk.train, &on_disk.val, &on_disk.test}) {
    for (auto& s : *part) s.id = s.label + "/" + fs::path(s.id).filename().string() + ".png";
  }
  on_disk.write_manifest(root / "split.json");
}

// --- noise -------------------------------------------------------------------

namespace {

/// Sum of squared 1-D bilinear weights (align_corners = false) for every output index.
std::vector<double> interpolation_energy(int out_size, int in_size) {
  std::vector<double> e(out_size);
  double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = std::max(0.0, (i + 0.5) * scale - 0.5);
    int i0 = static_cast<int>(std::floor(src));
    double f = src - i0;
    if (i0 >= in_size - 1) f = 0.0;
    e[i] = (1.0 - f) * (1.0 - f) + f * f;
  }
  return e;
}

}  // namespace

CoarseNoise coarse_noise(at::IntArrayRef shape, const NoiseSpec& spec, std::uint64_t seed) {
  if (spec.magnitude < 0) throw ConfigError("noise magnitude must be non-negative");
  if (spec.coarseness < 1) throw ConfigError("noise coarseness must be at least 1");
  if (shape.size() != 4) throw ShapeError("coarse_noise expects a [N, C, H, W] shape");
  const int64_t h = shape[2], w = shape[3];
  const int64_t ch = std::max<int64_t>(1, h / spec.coarseness);
  const int64_t cw = std::max<int64_t>(1, w / spec.coarseness);

  auto gen = at::detail::createCPUGenerator(seed);
  CoarseNoise out;
  out.coarse = torch::randn({shape[0], shape[1], ch, cw}, gen, torch::kFloat32) * spec.magnitude;
  auto up = torch::nn::functional::interpolate(
      out.coarse, torch::nn::functional::InterpolateFuncOptions()
                      .size(std::vector<int64_t>{h, w})
                      .mode(torch::kBilinear)
                      .align_corners(false));
  auto ey = interpolation_energy(static_cast<int>(h), static_cast<int>(ch));
  auto ex = interpolation_energy(static_cast<int>(w), static_cast<int>(cw));
  auto energy = torch::outer(torch::tensor(ey, torch::kFloat64), torch::tensor(ex, torch::kFloat64));
  out.field = up / energy.sqrt().to(torch::kFloat32);
  return out;
}

Tensor corrupt(const Tensor& batch, const NoiseSpec& spec, std::uint64_t seed) {
  check_image_batch(batch, "corrupt");
  if (spec.magnitude < 0) throw ConfigError("noise magnitude must be non-negative");
  if (spec.magnitude == 0) return batch.clone();
  auto noise = coarse_noise(batch.sizes(), spec, seed);
  return (batch + noise.field.to(batch.dtype())).clamp(0.0, 1.0);
}

}  // namespace morphaeus::data
