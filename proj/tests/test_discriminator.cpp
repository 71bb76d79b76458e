#include <torch/torch.h>

#include <doctest.h>

#include "stagematch/discriminator.hpp"

using namespace stagematch;

TEST_CASE("score grid sizes follow the conv arithmetic") {
  torch::manual_seed(3);
  PatchDiscriminator d{DiscriminatorConfig{}};
  torch::NoGradGuard no_grad;
  auto s256 = d->score_map(torch::rand({1, 3, 256, 256}) * 2 - 1);
  CHECK(s256.tensor.sizes() == torch::IntArrayRef({1, 1, 30, 30}));
  auto s128 = d->score_map(torch::rand({1, 3, 128, 128}) * 2 - 1);
  CHECK(s128.tensor.sizes() == torch::IntArrayRef({1, 1, 14, 14}));
  auto s70 = d->score_map(torch::rand({1, 3, 70, 70}) * 2 - 1);
  CHECK(s70.tensor.size(2) == s70.tensor.size(3));
}

TEST_CASE("input below the receptive field is rejected") {
  PatchDiscriminator d{DiscriminatorConfig{}};
  CHECK_THROWS_AS(d->score_map(torch::zeros({1, 3, 64, 64})), DimensionError);
  CHECK_THROWS_AS(d->score_map(torch::zeros({1, 3, 64})), DimensionError);
}

TEST_CASE("zero parameters give a zero score map") {
  PatchDiscriminator d{DiscriminatorConfig{}};
  {
    torch::NoGradGuard no_grad;
    for (auto& p : d->parameters()) p.zero_();
  }
  torch::NoGradGuard no_grad;
  auto s = d->score_map(torch::rand({1, 3, 128, 128}) * 2 - 1);
  CHECK(s.tensor.abs().max().item<float>() == 0.0f);
}

TEST_CASE("translation covariance at stride granularity") {
  torch::manual_seed(5);
  PatchDiscriminator d{DiscriminatorConfig{}};
  d->eval();
  torch::NoGradGuard no_grad;
  // The grid stride is 8 pixels, so an input that repeats every 8 columns
  // must produce identical interior score columns (instance norm preserves
  // periodicity; border cells see padding and are excluded).
  auto tile = torch::rand({1, 3, 256, 8}) * 2 - 1;
  auto periodic = tile.repeat({1, 1, 1, 32});
  auto s = d->score_map(periodic).tensor;
  auto interior = s.index({0, 0, torch::indexing::Slice(5, 25), torch::indexing::Slice(3, 26)});
  auto shifted = s.index({0, 0, torch::indexing::Slice(5, 25), torch::indexing::Slice(4, 27)});
  CHECK((interior - shifted).abs().max().item<float>() < 1e-4f);
}
