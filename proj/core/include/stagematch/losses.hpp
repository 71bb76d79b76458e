#pragma once

#include <vector>

#include "stagematch/common.hpp"
#include "stagematch/discriminator.hpp"
#include "stagematch/heads.hpp"

namespace stagematch {

struct LossWeights {
  double lambda_nce = 2.0;
  double lambda_idt = 10.0;

  void validate() const {
    if (lambda_nce < 0 || lambda_idt < 0) {
      throw ConfigError("loss weights must be non-negative");
    }
  }
};

struct StagePair {
  int encoder_tap;
  int decoder_tap;
};

/// The set of same-stage tap pairs and the patch count per pair. Unless
/// asymmetric mode is enabled, decoder_tap must mirror encoder_tap around the
/// generator's output tap.
struct StagePairSelection {
  std::vector<StagePair> pairs = {{7, 24}, {13, 18}};
  int patches_per_pair = 256;
  bool asymmetric = false;

  void validate(int output_tap) const;
};

/// Patch similarity in the unit-sphere latent space: mean over rows of
/// ||p_bar - z_bar||^2 = 2 - 2 cos(p, z), each value in [0, 4].
///
/// With inputs_normalized the rows must already be unit length (checked to
/// 1e-4); otherwise they are normalized internally.
torch::Tensor similarity_loss(const torch::Tensor& p, const torch::Tensor& z,
                              bool inputs_normalized = true);

/// Raw patch features gathered at shared positions of a stage pair.
struct PatchPairFeatures {
  torch::Tensor encoder_patches;  // (s, c)
  torch::Tensor decoder_patches;  // (s, c)
};

/// Sum over stage pairs of the mean per-position similarity loss between
/// predicted decoder latents and (stop-gradient) projected encoder latents.
/// stop_gradient=false exists only for collapse experiments.
torch::Tensor multistage_loss(const std::vector<PatchPairFeatures>& pairs,
                              HeadBank& heads, bool stop_gradient = true);

/// Least-squares discriminator loss: mean (real - 1)^2 + mean fake^2.
torch::Tensor gan_loss_d(const ScoreMap& real_scores, const ScoreMap& fake_scores);

/// Least-squares generator loss: mean (fake - 1)^2.
torch::Tensor gan_loss_g(const ScoreMap& fake_scores);

/// L1 identity mapping loss between G(y) and y.
torch::Tensor identity_loss(const ImageBatch& g_of_y, const ImageBatch& y);

/// Weighted total; the identity term contributes only while its schedule is
/// active.
torch::Tensor total_loss(const torch::Tensor& gan, const torch::Tensor& multistage,
                         const torch::Tensor& identity, const LossWeights& weights,
                         bool identity_is_active);

}  // namespace stagematch
