#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "stagematch/common.hpp"
#include "stagematch/discriminator.hpp"
#include "stagematch/generator.hpp"

namespace stagematch {

/// Discriminator-attention-guided sampling parameters. K positions per pair:
/// oversample kK candidates uniformly, rank them by discriminator score, keep
/// the floor(beta*K) most fake, fill the rest uniformly.
struct DagConfig {
  int n_patches = 256;            // K
  int oversampling_ratio = 4;     // k
  double importance_ratio = 0.5;  // beta
  bool dedupe = true;
  // Ascending keeps the lowest discriminator scores, i.e. the regions the
  // discriminator is most confident are fake. Descending is exposed for
  // experiments.
  bool rank_ascending = true;

  void validate() const;
};

/// Flat spatial positions selected on an H x W grid.
struct PatchIndexSet {
  std::vector<int64_t> indices;
  int importance_count = 0;
  int source_tap = -1;
};

/// Bilinearly interpolates a (detached) score grid to a tap's spatial size.
/// Expects a single-sample score map; returns an (h, w) tensor.
torch::Tensor upsample_scores(const ScoreMap& scores, int64_t target_height,
                              int64_t target_width);

/// Draws K patch positions from an (h, w) dense score grid. Deterministic for
/// a given (scores, cfg, rng state).
PatchIndexSet sample(const torch::Tensor& dense_scores, const DagConfig& cfg,
                     std::mt19937_64& rng, int source_tap = -1);

/// Gathers the channel vectors at the flattened positions, in index order.
/// Returns (K, channels); single-sample feature maps only.
torch::Tensor gather_patches(const StageFeatureMap& feature, const PatchIndexSet& idx);

/// Append-only JSONL history of sampled positions, consumed by the
/// sampling-frequency heatmap.
class SampleLog {
 public:
  explicit SampleLog(const std::filesystem::path& path);

  void append(int64_t iteration, const PatchIndexSet& idx, int64_t grid_height,
              int64_t grid_width);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

}  // namespace stagematch
