#include <torch/torch.h>

#include <benchmark/benchmark.h>

#include <random>

#include "stagematch/dag_sampler.hpp"
#include "stagematch/generator.hpp"

using namespace stagematch;

static void BM_DagSample(benchmark::State& state) {
  auto scores = torch::rand({state.range(0), state.range(0)});
  DagConfig cfg;
  cfg.n_patches = 256;
  cfg.oversampling_ratio = 4;
  cfg.importance_ratio = 0.5;
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample(scores, cfg, rng));
  }
}
BENCHMARK(BM_DagSample)->Arg(32)->Arg(64)->Arg(128);

static void BM_UniformSample(benchmark::State& state) {
  auto scores = torch::rand({state.range(0), state.range(0)});
  DagConfig cfg;
  cfg.n_patches = 256;
  cfg.oversampling_ratio = 1;
  cfg.importance_ratio = 0.0;
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample(scores, cfg, rng));
  }
}
BENCHMARK(BM_UniformSample)->Arg(32)->Arg(64)->Arg(128);

static void BM_ScoreUpsample(benchmark::State& state) {
  ScoreMap scores{torch::rand({1, 1, 14, 14}), {128, 128}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(upsample_scores(scores, state.range(0), state.range(0)));
  }
}
BENCHMARK(BM_ScoreUpsample)->Arg(32)->Arg(64);

static void BM_GeneratorForward(benchmark::State& state) {
  torch::manual_seed(0);
  GeneratorConfig cfg;
  cfg.base_width = static_cast<int>(state.range(1));
  StagedResnetGenerator gen(cfg);
  gen->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::rand({1, 3, state.range(0), state.range(0)}) * 2 - 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen->translate(x));
  }
}
BENCHMARK(BM_GeneratorForward)->Args({64, 32})->Args({128, 32})->Args({64, 64});

static void BM_GatherPatches(benchmark::State& state) {
  StageFeatureMap feature{18, torch::rand({1, 256, 64, 64})};
  std::mt19937_64 rng(2);
  PatchIndexSet idx;
  std::uniform_int_distribution<int64_t> pick(0, 64 * 64 - 1);
  for (int i = 0; i < 256; ++i) idx.indices.push_back(pick(rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(gather_patches(feature, idx));
  }
}
BENCHMARK(BM_GatherPatches);

BENCHMARK_MAIN();
