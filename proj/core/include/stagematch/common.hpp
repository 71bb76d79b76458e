#pragma once

#include <torch/torch.h>

#include <stdexcept>
#include <string>

namespace stagematch {

// Images are rank-4 float tensors (batch, channel, height, width) in [-1, 1].
using ImageBatch = torch::Tensor;

// Invalid configuration (bad tap index, impossible sampler setup, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape does not match the contract.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// API called against its contract (e.g. predicting encoder-branch latents).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical degeneracy (zero-norm rows, non-finite losses, failed sqrtm).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Data / IO problems (missing directories, undecodable files).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace stagematch
