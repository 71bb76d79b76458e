#include "stagematch/heads.hpp"

#include <fmt/format.h>

namespace stagematch {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

ProjectionHeadImpl::ProjectionHeadImpl(int in_channels, HeadConfig cfg)
    : in_channels_(in_channels) {
  net_ = nn::Sequential();
  int in = in_channels;
  for (int i = 0; i < cfg.layers; ++i) {
    net_->push_back(nn::Linear(in, cfg.latent_dim));
    if (cfg.layer_norm) {
      net_->push_back(nn::LayerNorm(nn::LayerNormOptions({cfg.latent_dim})));
    }
    if (i + 1 < cfg.layers) {
      net_->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
    }
    in = cfg.latent_dim;
  }
  register_module("net", net_);
}

LatentSet ProjectionHeadImpl::forward(const torch::Tensor& patches, Branch branch) {
  if (patches.dim() != 2 || patches.size(1) != in_channels_) {
    throw ConfigError(fmt::format(
        "projection expects (n, {}) patches, got {}x{}", in_channels_,
        patches.dim() > 0 ? patches.size(0) : -1,
        patches.dim() > 1 ? patches.size(1) : -1));
  }
  return {net_->forward(patches), /*normalized=*/false, branch};
}

PredictionHeadImpl::PredictionHeadImpl(HeadConfig cfg) {
  net_ = nn::Sequential();
  for (int i = 0; i < cfg.layers; ++i) {
    net_->push_back(nn::Linear(cfg.latent_dim, cfg.latent_dim));
    const bool last = (i + 1 == cfg.layers);
    if (!last) {
      if (cfg.layer_norm) {
        net_->push_back(nn::LayerNorm(nn::LayerNormOptions({cfg.latent_dim})));
      }
      net_->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
    }
  }
  register_module("net", net_);
}

LatentSet PredictionHeadImpl::forward(const LatentSet& latents) {
  if (latents.branch != Branch::decoder) {
    throw UsageError("prediction head only accepts decoder-branch latents");
  }
  if (latents.normalized) {
    throw UsageError("prediction head expects unnormalized latents");
  }
  return {net_->forward(latents.vectors), /*normalized=*/false, Branch::decoder};
}

LatentSet normalize(const LatentSet& latents) {
  const auto& v = latents.vectors;
  if (v.size(0) == 0) {
    return {v, /*normalized=*/true, latents.branch};
  }
  auto norms = v.norm(2, /*dim=*/1, /*keepdim=*/true);
  if ((norms < 1e-12).any().item<bool>()) {
    throw NumericError("normalize: zero-norm latent row");
  }
  return {v / norms, /*normalized=*/true, latents.branch};
}

PairAlignImpl::PairAlignImpl(int encoder_channels, int decoder_channels,
                             bool identity_init) {
  channel_map_ = nn::Conv2d(
      nn::Conv2dOptions(encoder_channels, decoder_channels, 1).bias(true));
  register_module("channel_map", channel_map_);
  if (identity_init) {
    if (encoder_channels != decoder_channels) {
      throw ConfigError("identity alignment requires equal channel widths");
    }
    torch::NoGradGuard no_grad;
    channel_map_->weight.zero_();
    for (int c = 0; c < encoder_channels; ++c) {
      channel_map_->weight[c][c][0][0] = 1.0;
    }
    channel_map_->bias.zero_();
  }
}

std::pair<StageFeatureMap, StageFeatureMap> PairAlignImpl::forward(
    const StageFeatureMap& enc, const StageFeatureMap& dec) {
  torch::Tensor resized = enc.tensor;
  if (enc.height() != dec.height() || enc.width() != dec.width()) {
    resized = F::interpolate(resized,
                             F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{dec.height(), dec.width()})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
  }
  return {StageFeatureMap{enc.tap_index, channel_map_->forward(resized)}, dec};
}

HeadBankImpl::HeadBankImpl(const std::vector<int>& channel_widths, HeadConfig cfg)
    : cfg_(cfg) {
  for (int width : channel_widths) {
    if (projections_.count(width)) continue;
    auto head = ProjectionHead(width, cfg_);
    register_module(fmt::format("projection_c{}", width), head);
    projections_.emplace(width, head);
  }
  predictor_ = PredictionHead(cfg_);
  register_module("prediction", predictor_);
}

ProjectionHead HeadBankImpl::projection_for(int channels) {
  auto it = projections_.find(channels);
  if (it == projections_.end()) {
    throw ConfigError(fmt::format("no projection head for channel width {}", channels));
  }
  return it->second;
}

LatentSet HeadBankImpl::project(const torch::Tensor& patches, Branch branch) {
  if (patches.dim() != 2) {
    throw ConfigError("project expects rank-2 (n, channels) patches");
  }
  return projection_for(static_cast<int>(patches.size(1)))->forward(patches, branch);
}

LatentSet HeadBankImpl::predict(const LatentSet& latents) {
  return predictor_->forward(latents);
}

}  // namespace stagematch
