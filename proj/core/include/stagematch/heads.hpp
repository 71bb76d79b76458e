#pragma once

#include <map>
#include <vector>

#include "stagematch/common.hpp"
#include "stagematch/generator.hpp"

namespace stagematch {

enum class Branch { encoder, decoder };

/// Per-patch latent vectors in the shared 256-d space.
struct LatentSet {
  torch::Tensor vectors;  // (n_patches, latent_dim)
  bool normalized = false;
  Branch branch = Branch::encoder;

  int64_t size() const { return vectors.size(0); }
};

struct HeadConfig {
  int latent_dim = 256;
  int layers = 2;
  bool layer_norm = true;
};

/// Shared two-layer projection MLP. One instance serves both the encoder and
/// decoder patches of a stage pair; layer normalization follows every linear.
class ProjectionHeadImpl : public torch::nn::Module {
 public:
  ProjectionHeadImpl(int in_channels, HeadConfig cfg = {});
  LatentSet forward(const torch::Tensor& patches, Branch branch);
  int in_channels() const { return in_channels_; }

 private:
  int in_channels_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(ProjectionHead);

/// Two-layer prediction MLP applied only to decoder-branch latents; the last
/// linear layer carries no normalization.
class PredictionHeadImpl : public torch::nn::Module {
 public:
  explicit PredictionHeadImpl(HeadConfig cfg = {});
  LatentSet forward(const LatentSet& latents);

 private:
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(PredictionHead);

/// Maps every latent row to the unit sphere. Rows with norm below 1e-12 raise
/// NumericError rather than being clamped.
LatentSet normalize(const LatentSet& latents);

/// Pre-projection alignment for an asymmetric tap pair: the encoder feature is
/// bilinearly resized to the decoder spatial size and a per-pair 1x1 map
/// brings its channels to the decoder width.
class PairAlignImpl : public torch::nn::Module {
 public:
  PairAlignImpl(int encoder_channels, int decoder_channels, bool identity_init = false);

  /// Returns (aligned encoder feature, decoder feature) at a common shape.
  std::pair<StageFeatureMap, StageFeatureMap> forward(const StageFeatureMap& enc,
                                                      const StageFeatureMap& dec);

 private:
  torch::nn::Conv2d channel_map_{nullptr};
};
TORCH_MODULE(PairAlign);

/// One projection head per distinct channel width plus the single prediction
/// head. Weight sharing across the branches of a pair falls out of keying the
/// projections by width.
class HeadBankImpl : public torch::nn::Module {
 public:
  HeadBankImpl(const std::vector<int>& channel_widths, HeadConfig cfg = {});

  ProjectionHead projection_for(int channels);
  LatentSet project(const torch::Tensor& patches, Branch branch);
  LatentSet predict(const LatentSet& latents);

  const HeadConfig& config() const { return cfg_; }

 private:
  HeadConfig cfg_;
  std::map<int, ProjectionHead> projections_;
  PredictionHead predictor_{nullptr};
};
TORCH_MODULE(HeadBank);

}  // namespace stagematch
