#include "stagematch/discriminator.hpp"

#include <fmt/format.h>

#include "stagematch/generator.hpp"

namespace stagematch {

namespace nn = torch::nn;

PatchDiscriminatorImpl::PatchDiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(cfg) {
  if (cfg_.n_stride2 < 1) {
    throw ConfigError(
        fmt::format("discriminator needs at least one stride-2 block, got {}", cfg_.n_stride2));
  }
  const int w = cfg_.base_width;
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)); };

  net_ = nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(cfg_.input_channels, w, 4).stride(2).padding(1)),
      lrelu());
  int in = w, jump = 2, rf = 4;
  for (int i = 1; i < cfg_.n_stride2; ++i) {
    const int out = std::min(8 * w, 2 * in);
    net_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    net_->push_back(nn::InstanceNorm2d(out));
    net_->push_back(lrelu());
    rf += 3 * jump;
    jump *= 2;
    in = out;
  }
  net_->push_back(nn::Conv2d(nn::Conv2dOptions(in, in, 4).stride(1).padding(1)));
  net_->push_back(nn::InstanceNorm2d(in));
  net_->push_back(lrelu());
  net_->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 4).stride(1).padding(1)));
  rf += 3 * jump + 3 * jump;
  receptive_field_ = rf;
  register_module("net", net_);
  apply(init_translation_weights);
}

ScoreMap PatchDiscriminatorImpl::score_map(const ImageBatch& image) {
  if (image.dim() != 4) {
    throw DimensionError(fmt::format("expected rank-4 image batch, got rank {}", image.dim()));
  }
  const int min_edge = cfg_.min_input_size > 0 ? cfg_.min_input_size : receptive_field_;
  if (image.size(2) < min_edge || image.size(3) < min_edge) {
    throw DimensionError(fmt::format(
        "input {}x{} smaller than the minimum edge {} (receptive field {}x{})",
        image.size(2), image.size(3), min_edge, receptive_field_, receptive_field_));
  }
  return {net_->forward(image), {image.size(2), image.size(3)}};
}

}  // namespace stagematch
