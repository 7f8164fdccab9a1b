#include "morphaeus/imaging.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <limits>

namespace morphaeus::imaging {

namespace fs = std::filesystem;

namespace {

cv::Mat to_mat(const Tensor& image) {
  auto t = image.detach().to(torch::kFloat32).contiguous().cpu();
  if (t.dim() == 3) t = t.squeeze(0);
  if (t.dim() != 2) throw ShapeError("expected a [1, H, W] or [H, W] image");
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_32F, t.data_ptr<float>());
  return m.clone();
}

Tensor from_mat(const cv::Mat& m) {
  cv::Mat f;
  m.convertTo(f, CV_32F);
  auto t = torch::from_blob(f.data, {1, f.rows, f.cols}, torch::kFloat32).clone();
  return t;
}

cv::Mat to_u8(const cv::Mat& f) {
  cv::Mat u8;
  cv::Mat clipped = cv::min(cv::max(f, 0.0), 1.0);
  clipped.convertTo(u8, CV_8U, 255.0, 0.0);
  return u8;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_or_throw(const fs::path& path, const cv::Mat& m) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) throw Error("failed to write image " + path.string());
}

}  // namespace

Tensor read_grayscale(const fs::path& path, int resolution) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error("cannot decode image " + path.string());

  double scale = 1.0;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F:
    case CV_64F: scale = 1.0; break;
    default: throw Error("unsupported pixel depth in " + path.string());
  }
  cv::Mat f;
  raw.convertTo(f, CV_32F, scale);

  cv::Mat gray;
  if (f.channels() == 1) {
    gray = f;
  } else {
    // Plain channel average; alpha is ignored.
    std::vector<cv::Mat> planes;
    cv::split(f, planes);
    gray = (planes[0] + planes[1] + planes[2]) / 3.0;
  }
  gray = cv::min(cv::max(gray, 0.0), 1.0);

  cv::Mat out;
  if (gray.rows == resolution && gray.cols == resolution) {
    out = gray;
  } else {
    bool shrinking = gray.rows > resolution || gray.cols > resolution;
    cv::resize(gray, out, cv::Size(resolution, resolution), 0, 0,
               shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  return from_mat(out).clamp(0.0, 1.0);
}

Tensor resize(const Tensor& image, int resolution) {
  cv::Mat m = to_mat(image);
  cv::Mat out;
  bool shrinking = m.rows > resolution || m.cols > resolution;
  cv::resize(m, out, cv::Size(resolution, resolution), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return from_mat(out);
}

void write_png(const fs::path& path, const Tensor& image) { write_or_throw(path, to_u8(to_mat(image))); }

void write_heatmap_png(const fs::path& path, const Tensor& image, const Tensor& heat) {
  cv::Mat gray = to_u8(to_mat(image));
  cv::Mat heat_u8 = to_u8(to_mat(heat));
  if (gray.size() != heat_u8.size()) throw ShapeError("heat map and image sizes differ");
  cv::Mat colour, gray_bgr, blended;
  cv::applyColorMap(heat_u8, colour, cv::COLORMAP_JET);
  cv::cvtColor(gray, gray_bgr, cv::COLOR_GRAY2BGR);
  cv::addWeighted(gray_bgr, 0.5, colour, 0.5, 0.0, blended);
  write_or_throw(path, blended);
}

void write_grid_png(const fs::path& path, const std::vector<std::vector<Tensor>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ShapeError("empty image grid");
  const int gap = 2;
  cv::Mat first = to_mat(rows.front().front());
  const int h = first.rows, w = first.cols;
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  cv::Mat canvas(static_cast<int>(rows.size()) * (h + gap) - gap,
                 static_cast<int>(cols) * (w + gap) - gap, CV_32F, cv::Scalar(1.0));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      cv::Mat tile = to_mat(rows[i][j]);
      if (tile.rows != h || tile.cols != w) throw ShapeError("grid tiles must share one size");
      tile.copyTo(canvas(cv::Rect(static_cast<int>(j) * (w + gap), static_cast<int>(i) * (h + gap), w, h)));
    }
  }
  write_or_throw(path, to_u8(canvas));
}

void write_line_plot_svg(const fs::path& path, const std::string& title, const std::string& xlabel,
                         const std::string& ylabel, const std::vector<Series>& series) {
  constexpr double width = 480, height = 360, margin = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (double v : s.xs) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.ys) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  auto px = [&](double v) { return margin + (v - xmin) / (xmax - xmin) * (width - 2 * margin); };
  auto py = [&](double v) { return height - margin - (v - ymin) / (ymax - ymin) * (height - 2 * margin); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  ensure_parent(path);
  std::ofstream os(path);
  if (!os) throw Error("failed to write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
     << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
     << height - margin << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">" << xlabel
     << "</text>\n";
  os << "<text x=\"14\" y=\"" << height / 2 << "\" transform=\"rotate(-90 14 " << height / 2
     << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  os << "<text x=\"" << margin << "\" y=\"" << height - margin + 14 << "\">" << xmin << "</text>\n";
  os << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 14 << "\" text-anchor=\"end\">"
     << xmax << "</text>\n";
  os << "<text x=\"" << margin - 4 << "\" y=\"" << height - margin << "\" text-anchor=\"end\">" << ymin
     << "</text>\n";
  os << "<text x=\"" << margin - 4 << "\" y=\"" << margin + 4 << "\" text-anchor=\"end\">" << ymax
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = palette[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.xs.size(), s.ys.size()); ++i) {
      os << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << width - margin - 4 << "\" y=\"" << margin + 14 * (k + 1)
       << "\" text-anchor=\"end\" fill=\"" << colour << "\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace morphaeus::imaging
