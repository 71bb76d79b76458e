#include "stagematch/dag_sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace stagematch {

namespace F = torch::nn::functional;

void DagConfig::validate() const {
  if (n_patches < 1) {
    throw ConfigError("dag: n_patches must be at least 1");
  }
  if (oversampling_ratio < 1) {
    throw ConfigError("dag: oversampling ratio k must be >= 1");
  }
  if (importance_ratio < 0.0 || importance_ratio > 1.0) {
    throw ConfigError("dag: importance ratio beta must lie in [0, 1]");
  }
}

torch::Tensor upsample_scores(const ScoreMap& scores, int64_t target_height,
                              int64_t target_width) {
  const auto& t = scores.tensor;
  if (t.dim() != 4 || t.size(0) != 1 || t.size(1) != 1) {
    throw DimensionError("upsample_scores: expected a (1, 1, h, w) score map");
  }
  auto detached = t.detach();
  if (t.size(2) == target_height && t.size(3) == target_width) {
    return detached.squeeze(0).squeeze(0).clone();
  }
  auto up = F::interpolate(detached,
                           F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{target_height, target_width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
  return up.squeeze(0).squeeze(0);
}

namespace {

// First `count` elements of a uniform permutation of [0, n).
std::vector<int64_t> draw_without_replacement(int64_t n, int64_t count,
                                              std::mt19937_64& rng) {
  std::vector<int64_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int64_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<int64_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

PatchIndexSet sample(const torch::Tensor& dense_scores, const DagConfig& cfg,
                     std::mt19937_64& rng, int source_tap) {
  cfg.validate();
  if (dense_scores.dim() != 2) {
    throw DimensionError("sample: dense_scores must be rank-2 (h, w)");
  }
  const int64_t n = dense_scores.numel();
  const int64_t K = cfg.n_patches;
  const int64_t kK = static_cast<int64_t>(cfg.oversampling_ratio) * K;
  if (kK > n) {
    throw ConfigError(fmt::format(
        "dag: k*K = {} exceeds the {} positions of the target grid", kK, n));
  }

  auto scores = dense_scores.detach().to(torch::kDouble).contiguous().view({-1});
  const double* score_data = scores.data_ptr<double>();

  const int64_t n_importance =
      static_cast<int64_t>(std::floor(cfg.importance_ratio * static_cast<double>(K)));

  PatchIndexSet out;
  out.source_tap = source_tap;
  out.importance_count = static_cast<int>(n_importance);
  out.indices.reserve(K);

  // Oversampling + ranking + importance picks.
  if (n_importance > 0) {
    auto candidates = draw_without_replacement(n, kK, rng);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](int64_t a, int64_t b) {
                       if (score_data[a] != score_data[b]) {
                         return cfg.rank_ascending ? score_data[a] < score_data[b]
                                                   : score_data[a] > score_data[b];
                       }
                       return a < b;
                     });
    out.indices.assign(candidates.begin(), candidates.begin() + n_importance);
  }

  // Covering: uniform fill of the remaining positions.
  const int64_t n_cover = K - n_importance;
  if (n_cover > 0) {
    if (cfg.dedupe) {
      std::unordered_set<int64_t> chosen(out.indices.begin(), out.indices.end());
      std::vector<int64_t> pool;
      pool.reserve(n - chosen.size());
      for (int64_t i = 0; i < n; ++i) {
        if (!chosen.count(i)) pool.push_back(i);
      }
      for (int64_t i = 0; i < n_cover; ++i) {
        std::uniform_int_distribution<int64_t> pick(i, static_cast<int64_t>(pool.size()) - 1);
        std::swap(pool[i], pool[pick(rng)]);
        out.indices.push_back(pool[i]);
      }
    } else {
      // Faithful variant: an independent permutation that may duplicate
      // importance picks.
      auto cover = draw_without_replacement(n, n_cover, rng);
      out.indices.insert(out.indices.end(), cover.begin(), cover.end());
    }
  }
  return out;
}

torch::Tensor gather_patches(const StageFeatureMap& feature, const PatchIndexSet& idx) {
  const auto& t = feature.tensor;
  if (t.dim() != 4 || t.size(0) != 1) {
    throw DimensionError("gather_patches: expected a single-sample (1, c, h, w) feature");
  }
  const int64_t n = t.size(2) * t.size(3);
  for (int64_t i : idx.indices) {
    if (i < 0 || i >= n) {
      throw DimensionError(fmt::format("gather_patches: index {} out of range [0, {})", i, n));
    }
  }
  auto flat = t.squeeze(0).flatten(1).transpose(0, 1);  // (h*w, c)
  auto index = torch::tensor(idx.indices, torch::kLong);
  return flat.index_select(0, index);
}

SampleLog::SampleLog(const std::filesystem::path& path) : path_(path) {
  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) {
    throw DataError(fmt::format("cannot open sample log {}", path.string()));
  }
}

void SampleLog::append(int64_t iteration, const PatchIndexSet& idx,
                       int64_t grid_height, int64_t grid_width) {
  nlohmann::json rec{{"iteration", iteration},
                     {"tap", idx.source_tap},
                     {"grid", {grid_height, grid_width}},
                     {"indices", idx.indices}};
  out_ << rec.dump() << "\n";
  out_.flush();
}

}  // namespace stagematch
