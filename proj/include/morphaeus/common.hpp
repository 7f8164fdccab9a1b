#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace morphaeus {

using torch::Tensor;

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, dataset layout, or argument. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape or range contract violated.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or a runtime resource could not be produced.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

// Grayscale image batches are [N, 1, H, W] in [0, 1].
void check_image_batch(const Tensor& x, const char* what);
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Hex SHA-256 of a byte buffer.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& bytes);
/// Hex SHA-256 over the raw bytes of a sequence of tensors (contiguous, in order).
std::string sha256_tensors(const std::vector<Tensor>& tensors);

/// Seeds torch's global generator.
void seed_everything(std::uint64_t seed);
/// Single-threaded intra-op execution, so reductions are reproducible run to run.
void use_deterministic_kernels();

}  // namespace morphaeus
