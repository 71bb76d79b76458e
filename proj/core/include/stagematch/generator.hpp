#pragma once

#include <map>
#include <utility>
#include <vector>

#include "stagematch/common.hpp"

namespace stagematch {

/// Staged ResNet translator configuration. The default values reproduce the
/// 9-block 256x256 generator with 4 encoder and 5 decoder residual blocks.
struct GeneratorConfig {
  int input_channels = 3;
  int base_width = 64;
  int n_downsamples = 2;
  int n_resblocks_encoder = 4;
  int n_resblocks_decoder = 5;

  void validate() const;

  /// Tap index of the bottleneck (last encoder activation).
  int bottleneck_tap() const { return 11 + n_resblocks_encoder; }
  /// Tap index of the output image.
  int output_tap() const { return bottleneck_tap() + n_resblocks_decoder + 11; }
};

/// A tapped intermediate activation h_l together with its stage index.
struct StageFeatureMap {
  int tap_index = -1;
  torch::Tensor tensor;  // (batch, channels, height, width)

  int64_t channels() const { return tensor.size(1); }
  int64_t height() const { return tensor.size(2); }
  int64_t width() const { return tensor.size(3); }
};

using TapFeatures = std::map<int, StageFeatureMap>;

/// Residual block: reflection-padded 3x3 convs with instance norm.
class ResnetBlockImpl : public torch::nn::Module {
 public:
  explicit ResnetBlockImpl(int channels);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResnetBlock);

/// Staged ResNet encoder/decoder generator exposing same-stage feature taps.
///
/// Tap indices follow the h-subscript naming of the stage table: encoder taps
/// run up to the bottleneck (h_15 by default), decoder taps start right after
/// it, and tap l pairs with tap output_tap - l.
class StagedResnetGeneratorImpl : public torch::nn::Module {
 public:
  explicit StagedResnetGeneratorImpl(GeneratorConfig cfg = {});

  /// Runs the encoder, returning the bottleneck and the requested taps.
  std::pair<StageFeatureMap, TapFeatures> encode(const ImageBatch& x,
                                                 const std::vector<int>& taps = {});

  /// Runs the decoder from a bottleneck activation.
  std::pair<ImageBatch, TapFeatures> decode(const StageFeatureMap& bottleneck,
                                            const std::vector<int>& taps = {});

  /// Full translation pass with no tap collection.
  ImageBatch translate(const ImageBatch& x);

  const GeneratorConfig& config() const { return cfg_; }

  std::vector<int> encoder_taps() const;
  std::vector<int> decoder_taps() const;
  bool is_encoder_tap(int tap) const;
  bool is_decoder_tap(int tap) const;

  /// Channel count of a tap's activation.
  int tap_channels(int tap) const;
  /// Spatial size of a tap's activation for a given input size.
  std::pair<int64_t, int64_t> tap_spatial(int tap, int64_t height, int64_t width) const;

 private:
  struct Stage {
    int tap_index;
    torch::nn::Sequential net;
    int out_channels;
    int scale_log2;  // log2 of input-to-activation downscale (negative = upscale)
  };

  void build();
  static void check_image_range(const ImageBatch& x);

  GeneratorConfig cfg_;
  std::vector<Stage> encoder_stages_;
  std::vector<Stage> decoder_stages_;
};
TORCH_MODULE(StagedResnetGenerator);

/// Normal(0, 0.02) conv init shared by generator and discriminator.
void init_translation_weights(torch::nn::Module& module);

}  // namespace stagematch
