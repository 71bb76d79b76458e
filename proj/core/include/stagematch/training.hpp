#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "stagematch/common.hpp"
#include "stagematch/dag_sampler.hpp"
#include "stagematch/data.hpp"
#include "stagematch/discriminator.hpp"
#include "stagematch/generator.hpp"
#include "stagematch/heads.hpp"
#include "stagematch/losses.hpp"

namespace stagematch {

struct TrainConfig {
  int epochs = 2;
  int batch_size = 1;
  // Unbalanced two-time-scale learning rates: generator, discriminator,
  // projection/prediction heads.
  double lr_g = 5e-5;
  double lr_d = 2e-4;
  double lr_heads = 5e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double decay_start_fraction = 0.5;
  bool identity_half = true;
  bool stop_gradient = true;
  uint64_t seed = 0;
  int image_size = 256;
  int checkpoint_every_epochs = 10;
  int64_t max_iterations = 0;  // 0 = run all epochs

  LossWeights loss_weights;
  DagConfig dag;
  StagePairSelection stages;
  GeneratorConfig generator;

  void validate() const;
};

struct TrainMetrics {
  int64_t iteration = 0;
  double loss_gan_g = 0;
  double loss_gan_d = 0;
  double loss_multistage = 0;
  double loss_identity = 0;
  double loss_total = 0;
  double sec_per_iter = 0;
  int64_t memory_peak_bytes = 0;
  double latent_std = 0;  // collapse monitor
};

/// Learning-rate multiplier: 1 until decay_start, then linear to 0 at the end.
double lr_factor(double progress, double decay_start = 0.5);

/// Identity regularizer schedule: active strictly before the halfway point.
bool identity_active(double progress);

/// Holds all networks and optimizers and performs alternating D/G updates.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// One discriminator update on (y, detached G(x)) followed by one
  /// generator+heads update on the full objective. `progress` in [0, 1]
  /// drives the identity schedule.
  TrainMetrics train_step(const ImageBatch& x, const ImageBatch& y, double progress);

  /// Scales every optimizer group to its configured base rate times
  /// lr_factor(progress).
  void apply_lr_schedule(double progress);

  void save_checkpoint(const std::filesystem::path& path) const;
  static Trainer load_checkpoint(const std::filesystem::path& path);

  /// Attach a history sink for sampled patch positions.
  void set_sample_log(SampleLog* log) { sample_log_ = log; }

  StagedResnetGenerator& generator() { return generator_; }
  PatchDiscriminator& discriminator() { return discriminator_; }
  HeadBank& heads() { return heads_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t iteration() const { return iteration_; }
  int64_t epoch() const { return epoch_; }
  void set_epoch(int64_t epoch) { epoch_ = epoch; }

  std::vector<double> current_learning_rates() const;

  /// FNV-1a hash of the serialized config, stored in checkpoints so stale
  /// checkpoint/config combinations are detectable.
  static uint64_t config_hash(const std::string& config_json);

 private:
  TrainConfig cfg_;
  StagedResnetGenerator generator_{nullptr};
  PatchDiscriminator discriminator_{nullptr};
  HeadBank heads_{nullptr};
  std::vector<PairAlign> aligns_;
  std::shared_ptr<torch::nn::Module> align_container_;

  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::unique_ptr<torch::optim::Adam> opt_heads_;

  std::mt19937_64 sampler_rng_;
  SampleLog* sample_log_ = nullptr;
  int64_t iteration_ = 0;
  int64_t epoch_ = 0;
};

struct FitResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_path;
  int64_t iterations = 0;
};

/// Full training run: metrics stream (one JSONL record per iteration),
/// periodic checkpoints, DAG history log, final tagged checkpoint. Resumes
/// from `resume_from` when given.
FitResult fit(const TrainConfig& cfg, const UnpairedDataset& data,
              const std::filesystem::path& run_dir,
              const std::string& resolved_config_json,
              const std::optional<std::filesystem::path>& resume_from = {});

/// Peak resident set size of this process, in bytes.
int64_t peak_memory_bytes();

}  // namespace stagematch
