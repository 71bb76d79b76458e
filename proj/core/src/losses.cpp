#include "stagematch/losses.hpp"

#include <fmt/format.h>

namespace stagematch {

void StagePairSelection::validate(int output_tap) const {
  if (pairs.empty()) {
    throw ConfigError("stage pair set must not be empty");
  }
  if (patches_per_pair < 1) {
    throw ConfigError("patches_per_pair must be at least 1");
  }
  if (!asymmetric) {
    for (const auto& p : pairs) {
      if (p.decoder_tap != output_tap - p.encoder_tap) {
        throw ConfigError(fmt::format(
            "pair (h_{}, h_{}) is not same-stage; expected decoder tap h_{} "
            "(enable asymmetric mode for non-mirrored pairs)",
            p.encoder_tap, p.decoder_tap, output_tap - p.encoder_tap));
      }
    }
  }
}

namespace {

torch::Tensor as_rows(const torch::Tensor& v) {
  return v.dim() == 1 ? v.unsqueeze(0) : v;
}

torch::Tensor unit_rows(const torch::Tensor& v, bool inputs_normalized,
                        const char* name) {
  auto rows = as_rows(v);
  auto norms = rows.norm(2, /*dim=*/1, /*keepdim=*/true);
  if (inputs_normalized) {
    if (rows.size(0) > 0 &&
        (norms - 1.0).abs().max().item<double>() > 1e-4) {
      throw UsageError(fmt::format("similarity_loss: {} rows are not unit length", name));
    }
    return rows;
  }
  if (rows.size(0) > 0 && (norms < 1e-12).any().item<bool>()) {
    throw NumericError("similarity_loss: zero-norm row");
  }
  return rows / norms;
}

}  // namespace

torch::Tensor similarity_loss(const torch::Tensor& p, const torch::Tensor& z,
                              bool inputs_normalized) {
  auto pb = unit_rows(p, inputs_normalized, "p");
  auto zb = unit_rows(z, inputs_normalized, "z");
  if (pb.sizes() != zb.sizes()) {
    throw DimensionError("similarity_loss: p and z shapes differ");
  }
  return (pb - zb).pow(2).sum(/*dim=*/1).mean();
}

torch::Tensor multistage_loss(const std::vector<PatchPairFeatures>& pairs,
                              HeadBank& heads, bool stop_gradient) {
  torch::Tensor total;
  for (const auto& pair : pairs) {
    if (pair.encoder_patches.size(0) != pair.decoder_patches.size(0)) {
      throw UsageError(fmt::format(
          "multistage_loss: position sets differ ({} encoder vs {} decoder patches)",
          pair.encoder_patches.size(0), pair.decoder_patches.size(0)));
    }
    auto k = heads->project(pair.encoder_patches, Branch::encoder);
    if (stop_gradient) {
      k.vectors = k.vectors.detach();
    }
    auto q = heads->predict(heads->project(pair.decoder_patches, Branch::decoder));
    auto term = similarity_loss(normalize(q).vectors, normalize(k).vectors);
    total = total.defined() ? total + term : term;
  }
  if (!total.defined()) {
    throw UsageError("multistage_loss: no stage pairs given");
  }
  return total;
}

torch::Tensor gan_loss_d(const ScoreMap& real_scores, const ScoreMap& fake_scores) {
  return (real_scores.tensor - 1.0).pow(2).mean() + fake_scores.tensor.pow(2).mean();
}

torch::Tensor gan_loss_g(const ScoreMap& fake_scores) {
  return (fake_scores.tensor - 1.0).pow(2).mean();
}

torch::Tensor identity_loss(const ImageBatch& g_of_y, const ImageBatch& y) {
  if (g_of_y.sizes() != y.sizes()) {
    throw DimensionError("identity_loss: shape mismatch");
  }
  return (g_of_y - y).abs().mean();
}

torch::Tensor total_loss(const torch::Tensor& gan, const torch::Tensor& multistage,
                         const torch::Tensor& identity, const LossWeights& weights,
                         bool identity_is_active) {
  weights.validate();
  const double idt_weight = identity_is_active ? weights.lambda_idt : 0.0;
  return gan + weights.lambda_nce * multistage + idt_weight * identity;
}

}  // namespace stagematch
