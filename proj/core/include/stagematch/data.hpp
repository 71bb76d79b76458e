#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stagematch/common.hpp"

namespace stagematch {

/// Loads an image file, bicubic-resizes it to size x size and scales to
/// [-1, 1]. Returns (1, 3, size, size).
ImageBatch load_image(const std::filesystem::path& path, int size);

/// Writes a single image tensor ((1,3,h,w) or (3,h,w), values in [-1, 1]).
void save_image(const torch::Tensor& image, const std::filesystem::path& path);

struct UnpairedDatasetSpec {
  std::filesystem::path domain_a_dir;
  std::filesystem::path domain_b_dir;
  int image_size = 256;
  uint64_t shuffle_seed = 0;
  bool horizontal_flip = false;
};

/// Two independently shuffled image domains. An epoch is one pass over domain
/// A; domain B is sampled cyclically. Ordering is deterministic in
/// (seed, epoch).
class UnpairedDataset {
 public:
  explicit UnpairedDataset(UnpairedDatasetSpec spec);

  int64_t epoch_length() const { return static_cast<int64_t>(files_a_.size()); }
  int64_t domain_b_size() const { return static_cast<int64_t>(files_b_.size()); }

  struct Sample {
    ImageBatch a;
    ImageBatch b;
    std::filesystem::path a_path;
    std::filesystem::path b_path;
  };
  Sample get(int64_t epoch, int64_t index) const;

  const UnpairedDatasetSpec& spec() const { return spec_; }

 private:
  UnpairedDatasetSpec spec_;
  std::vector<std::filesystem::path> files_a_;
  std::vector<std::filesystem::path> files_b_;
};

/// Synthetic shape domains for desk-scale runs: colored shapes on a dark
/// background, with domain B's hue distribution rotated by a fixed angle.
struct ToyDomainSpec {
  int size = 64;
  int n_images = 16;
  double hue_rotation_deg = 120.0;
  double palette_hue_min_deg = 0.0;
  double palette_hue_max_deg = 90.0;
  uint64_t seed = 0;
};

/// Writes n_images PNGs per domain under root/trainA and root/trainB plus a
/// manifest.json recording the spec.
void synth_toy(const ToyDomainSpec& spec, const std::filesystem::path& root);

/// Circular mean hue (degrees, [0, 360)) over sufficiently saturated pixels
/// of every image in a directory.
double mean_hue_deg(const std::filesystem::path& dir);

/// Sorted list of decodable image files in a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace stagematch
