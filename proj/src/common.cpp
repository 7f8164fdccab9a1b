#include "morphaeus/common.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <sstream>

namespace morphaeus {

void check_image_batch(const Tensor& x, const char* what) {
  if (!x.defined() || x.dim() != 4) {
    throw ShapeError(std::string(what) + ": expected a [N, C, H, W] batch");
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << what << ": shape mismatch";
    if (a.defined() && b.defined()) os << " " << a.sizes() << " vs " << b.sizes();
    throw ShapeError(os.str());
  }
}

namespace {

struct DigestCtx {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};
  DigestCtx() { EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr); }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 0xF]);
    }
    return out;
  }
};

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  DigestCtx d;
  d.update(data, size);
  return d.hex();
}

std::string sha256_hex(const std::string& bytes) { return sha256_hex(bytes.data(), bytes.size()); }

std::string sha256_tensors(const std::vector<Tensor>& tensors) {
  DigestCtx d;
  for (const auto& t : tensors) {
    auto c = t.detach().contiguous().cpu();
    d.update(c.data_ptr(), c.numel() * c.element_size());
  }
  return d.hex();
}

void seed_everything(std::uint64_t seed) { torch::manual_seed(seed); }

void use_deterministic_kernels() { at::set_num_threads(1); }

}  // namespace morphaeus
