#pragma once

#include "morphaeus/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace morphaeus::data {

/// One grayscale image with its class label. `id` is the path relative to the
/// dataset root for folder data, or a generated identifier for synthetic data.
struct Sample {
  std::string id;
  std::string label;
  Tensor image;  // [1, R, R], float32 in [0, 1]
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// 80/10/10 by count; validation and test take floor(n / 10), the remainder goes to train.
SplitCounts split_counts(std::size_t n);

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  int resolution = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> skipped;  // files that failed to decode

  /// {"train": [...], "val": [...], "test": [...], "skipped": [...], "resolution", "seed"}
  nlohmann::json manifest() const;
  std::string manifest_hash() const;
  void write_manifest(const std::filesystem::path& path) const;

  std::vector<Sample> train_with_label(const std::string& label) const;
  std::vector<Sample> val_with_label(const std::string& label) const;
  std::vector<Sample> test_with_label(const std::string& label) const;
  std::vector<std::string> labels() const;
};

/// Sorted names of the class subdirectories of `root` (the `masks` directory is ignored).
std::vector<std::string> list_classes(const std::filesystem::path& root);

/// Loads `<root>/<Class>/*` and splits every class 80/10/10 with a seeded shuffle of the
/// sorted file list. Undecodable files are skipped, logged, and listed in the manifest.
DatasetSplit load_image_folder(const std::filesystem::path& root, int resolution, std::uint64_t seed);

/// Per-label seeded shuffle and 80/10/10 split, as load_image_folder does for files.
DatasetSplit split_samples(std::vector<Sample> samples, int resolution, std::uint64_t seed);

/// n distinct random images of one class, normalized exactly like load_image_folder.
std::vector<Sample> sample_ood(const std::filesystem::path& root, const std::string& class_name,
                               std::size_t n, std::uint64_t seed, int resolution);

/// [N, 1, R, R] batch of the given samples.
Tensor stack(const std::vector<Sample>& samples);
Tensor stack(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

// --- synthetic data -------------------------------------------------------

struct AnomalySpec {
  double radius_min = 3.0;  // pixels
  double radius_max = 6.0;
  double intensity_delta = 0.5;
};

struct SyntheticSpec {
  int n_normal = 200;
  int n_anomalous = 50;
  int resolution = 64;
  AnomalySpec anomaly;
  std::uint64_t texture_seed = 7;
};

/// Normal scenes carry label "normal", anomalous ones "anomalous". The anomalous
/// images exist only in `split.test`; `masks` and `counterparts` run parallel to
/// `split.test` (all-zero mask and the image itself for normal test samples).
struct SyntheticDataset {
  DatasetSplit split;
  std::vector<Tensor> masks;
  std::vector<Tensor> counterparts;
};

/// Lung-like scenes: two dark textured ellipses with rib stripes on a smooth body
/// background. Anomalies add one bright disk inside a lung ellipse.
SyntheticDataset make_synthetic(const SyntheticSpec& spec);

enum class ShapeKind { circles, squares, crosses };
ShapeKind parse_shape_kind(const std::string& name);
std::string to_string(ShapeKind kind);

/// Textured scenes with two bright shapes of one kind; used as synthetic OoD classes.
std::vector<Sample> make_shapes(ShapeKind kind, int n, int resolution, std::uint64_t seed);

/// Writes samples as `<root>/<label>/<id>.png`.
void write_samples(const std::vector<Sample>& samples, const std::filesystem::path& root);
/// Writes a synthetic dataset in folder layout plus `<root>/masks/` and the split manifest.
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& root);

// --- noise ---------------------------------------------------------------

struct NoiseSpec {
  double magnitude = 0.2;  // per-pixel standard deviation
  int coarseness = 8;      // noise is drawn at (H / coarseness) x (W / coarseness)
};

struct CoarseNoise {
  Tensor coarse;  // [N, C, H / k, W / k]
  Tensor field;   // [N, C, H, W], bilinear upsample rescaled to unit marginal variance
};

/// Gaussian noise drawn on the coarse grid and bilinearly upsampled. Each output pixel is
/// divided by the root of its interpolation weights' sum of squares, so the marginal
/// standard deviation equals `magnitude` everywhere.
CoarseNoise coarse_noise(at::IntArrayRef shape, const NoiseSpec& spec, std::uint64_t seed);

/// x + coarse noise, clipped to [0, 1].
Tensor corrupt(const Tensor& batch, const NoiseSpec& spec, std::uint64_t seed);

}  // namespace morphaeus::data
