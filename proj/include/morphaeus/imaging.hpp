#pragma once

#include "morphaeus/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace morphaeus::imaging {

/// Reads any OpenCV-decodable image, averages colour channels to gray, scales
/// to [0, 1] by the source bit depth and resizes to resolution x resolution.
/// Returns a [1, R, R] float tensor. Throws Error if the file cannot be decoded.
Tensor read_grayscale(const std::filesystem::path& path, int resolution);

/// Resizes a [1, H, W] image with area interpolation.
Tensor resize(const Tensor& image, int resolution);

/// Writes a [1, H, W] or [H, W] image in [0, 1] as 8-bit PNG.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Overlays a [1, H, W] heat map in [0, 1] on the gray image using the jet colour map.
void write_heatmap_png(const std::filesystem::path& path, const Tensor& image, const Tensor& heat);

/// Tiles equally sized [1, H, W] images into rows x cols with a 2 px gap.
void write_grid_png(const std::filesystem::path& path, const std::vector<std::vector<Tensor>>& rows);

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Minimal SVG line chart; enough for ROC, PR and density curves.
void write_line_plot_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& xlabel, const std::string& ylabel,
                         const std::vector<Series>& series);

}  // namespace morphaeus::imaging
