#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stagematch/common.hpp"

namespace stagematch {

/// Gaussian fit of a feature set.
struct FeatureStats {
  torch::Tensor mean;        // (d,) double
  torch::Tensor covariance;  // (d, d) double, symmetric PSD
  int64_t n = 0;
};

/// Mean and unbiased covariance of an (n, d) feature matrix; n >= 2.
FeatureStats compute_stats(const torch::Tensor& features);

/// Frechet distance between two Gaussian fits:
/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}),
/// with the matrix square root taken by eigendecomposition. Tiny negative
/// eigenvalues (relative magnitude above -1e-8) are clamped to zero; the
/// result is reported clamped at 0.
double fid(const FeatureStats& a, const FeatureStats& b);

/// Deep feature source for FID.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual torch::Tensor extract(const ImageBatch& images) = 0;  // (n, d)
  virtual int64_t dim() const = 0;
};

/// Offline stand-in for a pretrained inception network: a fixed-seed random
/// convolutional embedder with global average pooling. Stable across runs.
class RandomConvEmbedder : public FeatureExtractor {
 public:
  explicit RandomConvEmbedder(uint64_t seed = 1234, int64_t dim = 128);
  torch::Tensor extract(const ImageBatch& images) override;
  int64_t dim() const override { return dim_; }

 private:
  int64_t dim_;
  torch::nn::Sequential net_{nullptr};
};

/// TorchScript feature extractor loaded from external pretrained weights;
/// inputs are bicubic-resized to 299x299 first.
class PretrainedExtractor : public FeatureExtractor {
 public:
  PretrainedExtractor(const std::filesystem::path& weights_path, int64_t dim = 2048);
  torch::Tensor extract(const ImageBatch& images) override;
  int64_t dim() const override { return dim_; }

 private:
  int64_t dim_;
  std::shared_ptr<torch::jit::Module> module_;
};

/// Runs the extractor over every image file in a directory.
torch::Tensor extract_features_from_dir(const std::filesystem::path& dir,
                                        FeatureExtractor& extractor, int image_size);

/// FID between two image directories.
double fid_between_dirs(const std::filesystem::path& real_dir,
                        const std::filesystem::path& fake_dir,
                        FeatureExtractor& extractor, int image_size);

/// Normalized per-position sampling counts ((h, w) in [0, 1]) accumulated
/// from a DAG history log, optionally rendered to a grayscale PNG.
torch::Tensor sampling_frequency_map(const std::filesystem::path& history_log,
                                     int64_t grid_height, int64_t grid_width,
                                     const std::filesystem::path& png_out = {});

struct DensityPlotData {
  std::vector<double> bin_centers;
  std::vector<double> densities;
  int64_t n_weights = 0;
  double mean = 0;
  double stddev = 0;
};

/// Histogram density of a checkpoint component's flattened weights, written
/// as CSV and a rendered PNG.
DensityPlotData weight_density(const std::filesystem::path& checkpoint,
                               const std::string& component,
                               const std::filesystem::path& csv_out = {},
                               const std::filesystem::path& png_out = {},
                               int bins = 101);

/// Mean Sobel edge-magnitude L1 difference between two same-size images in
/// [-1, 1]; the content-preservation metric of the toy task.
double edge_map_l1(const ImageBatch& a, const ImageBatch& b);

}  // namespace stagematch
