#pragma once

#include "stagematch/common.hpp"

namespace stagematch {

/// Spatial realness grid from the patch discriminator. Each cell judges one
/// 70x70 receptive field of the source image; scores are raw (no activation).
struct ScoreMap {
  torch::Tensor tensor;  // (batch, 1, h, w)
  std::pair<int64_t, int64_t> source_image_size;

  int64_t height() const { return tensor.size(2); }
  int64_t width() const { return tensor.size(3); }
};

struct DiscriminatorConfig {
  int input_channels = 3;
  int base_width = 64;
  // Stride-2 blocks before the two stride-1 convolutions. 3 gives the 70-px
  // receptive field; 2 gives a 34-px field for images smaller than 70.
  int n_stride2 = 3;
  // Smallest accepted input edge. 0 means the receptive field.
  int min_input_size = 0;
};

/// 70x70 patch discriminator: three stride-2 blocks followed by two stride-1
/// convolutions; 256x256 input yields a 30x30 grid.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(DiscriminatorConfig cfg = {});

  ScoreMap score_map(const ImageBatch& image);
  torch::Tensor forward(const ImageBatch& image) { return score_map(image).tensor; }

  int receptive_field() const { return receptive_field_; }

  static constexpr int kReceptiveField = 70;

 private:
  DiscriminatorConfig cfg_;
  int receptive_field_ = kReceptiveField;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

}  // namespace stagematch
