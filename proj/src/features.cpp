#include "morphaeus/features.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace morphaeus {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace {

std::string extractor_hash(const std::string& name, const torch::nn::Sequential& net) {
  std::vector<Tensor> params;
  for (const auto& p : net->parameters()) params.push_back(p.to(torch::kFloat32));
  return sha256_hex(name + ":" + sha256_tensors(params));
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

torch::nn::Conv2d conv3x3(int64_t in, int64_t out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
}

}  // namespace

FeatureExtractor::FeatureExtractor(torch::nn::Sequential net, Options options)
    : net_(std::move(net)), options_(std::move(options)) {
  if (options_.pooled_layer >= net_->size()) throw ConfigError("pooled layer index out of range");
  for (auto t : options_.tap_layers) {
    if (t >= net_->size()) throw ConfigError("tap layer index out of range");
  }
  net_->eval();
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  hash_ = extractor_hash(options_.name, net_);
}

FeatureExtractor FeatureExtractor::builtin() {
  torch::nn::Sequential net(conv3x3(1, 16), torch::nn::ReLU(), conv3x3(16, 16), torch::nn::ReLU(),
                            torch::nn::MaxPool2d(2), conv3x3(16, 32), torch::nn::ReLU(), conv3x3(32, 32),
                            torch::nn::ReLU(), torch::nn::MaxPool2d(2), conv3x3(32, 64), torch::nn::ReLU());
  auto gen = at::detail::createCPUGenerator(20240917);
  torch::NoGradGuard no_grad;
  bool first = true;
  for (auto& module : net->children()) {
    auto* conv = module->as<torch::nn::Conv2d>();
    if (!conv) continue;
    auto& w = conv->weight;
    const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
    w.copy_(torch::randn(w.sizes(), gen, torch::kFloat32) * std::sqrt(2.0 / fan_in));
    if (first) {
      w.sub_(w.mean({1, 2, 3}, /*keepdim=*/true));
      first = false;
    }
    conv->bias.zero_();
  }
  Options opt;
  opt.name = "builtin-frozen-v1";
  opt.tap_layers = {3, 8};
  opt.pooled_layer = 11;
  return FeatureExtractor(net, opt);
}

fs::path FeatureExtractor::default_weights_dir() {
  if (const char* env = std::getenv("MORPHAEUS_WEIGHTS_DIR"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "morphaeus";
  return fs::path(".morphaeus-cache");
}

FeatureExtractor FeatureExtractor::vgg16(const fs::path& weights_dir, int native_size) {
  const fs::path file = weights_dir / "vgg16_features.pt";
  const fs::path sidecar = weights_dir / "vgg16_features.pt.sha256";
  const std::string hint =
      "install the weights offline with `python3 tools/export_vgg16_weights.py --out " + weights_dir.string() +
      "` on a machine that can reach the torchvision model zoo, or choose extractor=builtin";
  if (!fs::exists(file) || !fs::exists(sidecar)) {
    throw ConfigError("VGG16 weights not found in " + weights_dir.string() + "; " + hint);
  }
  std::string expected = read_file(sidecar);
  expected = expected.substr(0, expected.find_first_of(" \n\r\t"));
  if (sha256_hex(read_file(file)) != expected) {
    throw ConfigError("checksum mismatch for " + file.string() + "; " + hint);
  }

  // torchvision vgg16().features layout: 'M' marks a max-pool.
  const std::vector<int> cfg = {64, 64, -1, 128, 128, -1, 256, 256, 256, -1, 512, 512, 512, -1, 512, 512, 512};
  torch::nn::Sequential net;
  std::vector<std::pair<std::size_t, torch::nn::Conv2d>> convs;
  int64_t in = 3;
  for (int c : cfg) {
    if (c < 0) {
      net->push_back(torch::nn::MaxPool2d(2));
      continue;
    }
    auto conv = conv3x3(in, c);
    convs.emplace_back(net->size(), conv);
    net->push_back(conv);
    net->push_back(torch::nn::ReLU());
    in = c;
  }

  torch::serialize::InputArchive archive;
  try {
    archive.load_from(file.string());
    torch::NoGradGuard no_grad;
    for (auto& [index, conv] : convs) {
      Tensor w, b;
      archive.read("features_" + std::to_string(index) + "_weight", w);
      archive.read("features_" + std::to_string(index) + "_bias", b);
      conv->weight.copy_(w);
      conv->bias.copy_(b);
    }
  } catch (const c10::Error& e) {
    throw ConfigError("cannot read VGG16 weights from " + file.string() + ": " + e.what_without_backtrace());
  }

  Options opt;
  opt.name = "vgg16-imagenet";
  opt.tap_layers = {3, 8, 15};  // relu1_2, relu2_2, relu3_3
  opt.pooled_layer = 29;        // relu5_3
  opt.input_channels = 3;
  opt.native_size = native_size;
  opt.imagenet_normalize = true;
  return FeatureExtractor(net, opt);
}

FeatureExtractor FeatureExtractor::from_name(const std::string& name, int native_size) {
  if (name == "builtin") return builtin();
  if (name == "vgg16") return vgg16(default_weights_dir(), native_size);
  throw ConfigError("unknown feature extractor '" + name + "' (expected builtin or vgg16)");
}

Tensor FeatureExtractor::adapt(const Tensor& x) const {
  check_image_batch(x, "feature extractor");
  Tensor y = x;
  if (options_.input_channels == 3 && y.size(1) == 1) y = y.expand({y.size(0), 3, y.size(2), y.size(3)});
  if (options_.native_size > 0 && (y.size(2) != options_.native_size || y.size(3) != options_.native_size)) {
    y = F::interpolate(y, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{options_.native_size, options_.native_size})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  if (options_.imagenet_normalize) {
    auto opts = y.options();
    auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    y = (y - mean) / std;
  }
  return y;
}

std::vector<Tensor> FeatureExtractor::taps(const Tensor& x) const {
  Tensor h = adapt(x);
  std::vector<Tensor> out;
  std::size_t last = *options_.tap_layers.rbegin();
  std::size_t i = 0;
  for (auto& layer : *net_.ptr()) {
    h = layer.forward(h);
    if (options_.tap_layers.count(i)) out.push_back(h);
    if (i == last) break;
    ++i;
  }
  return out;
}

Tensor FeatureExtractor::pooled(const Tensor& x) const {
  Tensor h = adapt(x);
  std::size_t i = 0;
  for (auto& layer : *net_.ptr()) {
    h = layer.forward(h);
    if (i == options_.pooled_layer) break;
    ++i;
  }
  return h.mean({2, 3});
}

FeatureExtractor FeatureExtractor::to(torch::Dtype dtype) const {
  auto copy = std::dynamic_pointer_cast<torch::nn::SequentialImpl>(net_->clone());
  copy->to(dtype);
  FeatureExtractor out(torch::nn::Sequential(copy), options_);
  out.hash_ = hash_;
  return out;
}

}  // namespace morphaeus
