#include "stagematch/training.hpp"

#include <fmt/format.h>
#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stagematch/config.hpp"

namespace stagematch {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size != 1) throw ConfigError("train: only batch size 1 is supported");
  if (lr_g <= 0 || lr_d <= 0 || lr_heads <= 0) {
    throw ConfigError("train: learning rates must be positive");
  }
  if (decay_start_fraction < 0 || decay_start_fraction > 1) {
    throw ConfigError("train: decay_start_fraction must lie in [0, 1]");
  }
  loss_weights.validate();
  dag.validate();
  generator.validate();
  stages.validate(generator.output_tap());
}

double lr_factor(double progress, double decay_start) {
  if (progress <= decay_start) return 1.0;
  if (progress >= 1.0) return 0.0;
  return (1.0 - progress) / (1.0 - decay_start);
}

bool identity_active(double progress) { return progress < 0.5; }

int64_t peak_memory_bytes() {
  struct rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<int64_t>(usage.ru_maxrss) * 1024;
}

namespace {

struct AlignContainer : torch::nn::Module {};

torch::Tensor cpu_rng_state() {
  return at::detail::getDefaultCPUGenerator().get_state();
}

void set_cpu_rng_state(const torch::Tensor& state) {
  auto gen = at::detail::getDefaultCPUGenerator();
  gen.set_state(state);
}

}  // namespace

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  torch::manual_seed(cfg_.seed);
  sampler_rng_.seed(cfg_.seed ^ 0x5eedu);

  generator_ = StagedResnetGenerator(cfg_.generator);
  DiscriminatorConfig d_cfg;
  d_cfg.input_channels = cfg_.generator.input_channels;
  // Below the 70-px receptive field the patch cells would all see the whole
  // (padded) image; drop one stride-2 block so they stay local (34-px field).
  if (cfg_.image_size < PatchDiscriminatorImpl::kReceptiveField) {
    d_cfg.n_stride2 = 2;
  }
  discriminator_ = PatchDiscriminator(d_cfg);

  std::vector<int> widths;
  for (const auto& pair : cfg_.stages.pairs) {
    widths.push_back(generator_->tap_channels(pair.decoder_tap));
  }
  heads_ = HeadBank(widths, HeadConfig{});

  align_container_ = std::make_shared<AlignContainer>();
  if (cfg_.stages.asymmetric) {
    for (size_t i = 0; i < cfg_.stages.pairs.size(); ++i) {
      const auto& pair = cfg_.stages.pairs[i];
      auto align = PairAlign(generator_->tap_channels(pair.encoder_tap),
                             generator_->tap_channels(pair.decoder_tap));
      align_container_->register_module(fmt::format("pair_{}", i), align);
      aligns_.push_back(align);
    }
  }

  auto adam = [&](std::vector<torch::Tensor> params, double lr) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params),
        torch::optim::AdamOptions(lr).betas({cfg_.adam_beta1, cfg_.adam_beta2}));
  };
  opt_g_ = adam(generator_->parameters(), cfg_.lr_g);
  opt_d_ = adam(discriminator_->parameters(), cfg_.lr_d);
  auto head_params = heads_->parameters();
  auto align_params = align_container_->parameters();
  head_params.insert(head_params.end(), align_params.begin(), align_params.end());
  opt_heads_ = adam(std::move(head_params), cfg_.lr_heads);
}

void Trainer::apply_lr_schedule(double progress) {
  const double factor = lr_factor(progress, cfg_.decay_start_fraction);
  auto set_lr = [&](torch::optim::Adam& opt, double base) {
    for (auto& group : opt.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(base * factor);
    }
  };
  set_lr(*opt_g_, cfg_.lr_g);
  set_lr(*opt_d_, cfg_.lr_d);
  set_lr(*opt_heads_, cfg_.lr_heads);
}

std::vector<double> Trainer::current_learning_rates() const {
  auto lr_of = [](const torch::optim::Adam& opt) {
    return static_cast<const torch::optim::AdamOptions&>(opt.param_groups().front().options()).lr();
  };
  return {lr_of(*opt_g_), lr_of(*opt_d_), lr_of(*opt_heads_)};
}

TrainMetrics Trainer::train_step(const ImageBatch& x, const ImageBatch& y,
                                 double progress) {
  const auto start = std::chrono::steady_clock::now();

  std::vector<int> enc_taps, dec_taps;
  for (const auto& pair : cfg_.stages.pairs) {
    enc_taps.push_back(pair.encoder_tap);
    dec_taps.push_back(pair.decoder_tap);
  }
  auto [bottleneck, enc_feats] = generator_->encode(x, enc_taps);
  auto [fake, dec_feats] = generator_->decode(bottleneck, dec_taps);

  // Discriminator update on real y and detached G(x).
  opt_d_->zero_grad();
  auto real_scores = discriminator_->score_map(y);
  auto fake_scores_d = discriminator_->score_map(fake.detach());
  auto loss_d = gan_loss_d(real_scores, fake_scores_d);
  loss_d.backward();
  opt_d_->step();

  // The sampler sees the (detached) realness grid of the generated image.
  ScoreMap dag_scores{fake_scores_d.tensor.detach(), fake_scores_d.source_image_size};

  // Generator + heads update.
  opt_g_->zero_grad();
  opt_heads_->zero_grad();
  auto g_gan = gan_loss_g(discriminator_->score_map(fake));

  DagConfig dag = cfg_.dag;
  dag.n_patches = cfg_.stages.patches_per_pair;

  std::vector<PatchPairFeatures> pair_feats;
  for (size_t i = 0; i < cfg_.stages.pairs.size(); ++i) {
    const auto& pair = cfg_.stages.pairs[i];
    StageFeatureMap enc_f = enc_feats.at(pair.encoder_tap);
    StageFeatureMap dec_f = dec_feats.at(pair.decoder_tap);
    if (cfg_.stages.asymmetric) {
      std::tie(enc_f, dec_f) = aligns_[i]->forward(enc_f, dec_f);
    }
    auto dense = upsample_scores(dag_scores, dec_f.height(), dec_f.width());
    auto idx = sample(dense, dag, sampler_rng_, pair.decoder_tap);
    if (sample_log_) {
      sample_log_->append(iteration_, idx, dec_f.height(), dec_f.width());
    }
    pair_feats.push_back({gather_patches(enc_f, idx), gather_patches(dec_f, idx)});
  }
  auto loss_ms = multistage_loss(pair_feats, heads_, cfg_.stop_gradient);

  const bool idt_active =
      cfg_.loss_weights.lambda_idt > 0 &&
      (cfg_.identity_half ? identity_active(progress) : true);
  torch::Tensor loss_idt = torch::zeros({}, fake.options());
  if (idt_active) {
    loss_idt = identity_loss(generator_->translate(y), y);
  }

  auto loss_g =
      total_loss(g_gan, loss_ms, loss_idt, cfg_.loss_weights, idt_active);

  TrainMetrics m;
  m.iteration = iteration_;
  m.loss_gan_g = g_gan.item<double>();
  m.loss_gan_d = loss_d.item<double>();
  m.loss_multistage = loss_ms.item<double>();
  m.loss_identity = loss_idt.item<double>();
  m.loss_total = loss_g.item<double>();
  if (!std::isfinite(m.loss_total) || !std::isfinite(m.loss_gan_d)) {
    throw NumericError(fmt::format(
        "non-finite loss at iteration {}: gan_g={} gan_d={} multistage={} identity={}",
        iteration_, m.loss_gan_g, m.loss_gan_d, m.loss_multistage, m.loss_identity));
  }

  loss_g.backward();
  opt_g_->step();
  opt_heads_->step();

  // Collapse monitor: total standard deviation of the normalized projected
  // decoder latents across patches. 0 at the collapse solution (constant
  // latents), 1 for latents spread uniformly over the unit sphere.
  {
    torch::NoGradGuard no_grad;
    double std_sum = 0;
    for (const auto& feats : pair_feats) {
      auto z = normalize(heads_->project(feats.decoder_patches, Branch::decoder));
      std_sum += z.size() > 1
                     ? z.vectors.var(0).sum().sqrt().item<double>()
                     : 0.0;
    }
    m.latent_std = std_sum / static_cast<double>(pair_feats.size());
  }

  m.memory_peak_bytes = peak_memory_bytes();
  m.sec_per_iter =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++iteration_;
  return m;
}

uint64_t Trainer::config_hash(const std::string& config_json) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : config_json) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  torch::serialize::OutputArchive root;
  root.write("format_version", torch::IValue(static_cast<int64_t>(1)));
  const std::string config_json = to_json(cfg_).dump();
  root.write("config_json", torch::IValue(config_json));
  root.write("config_hash",
             torch::IValue(static_cast<int64_t>(config_hash(config_json))));
  root.write("epoch", torch::IValue(epoch_));
  root.write("iteration", torch::IValue(iteration_));

  auto write_module = [&](const char* name, const torch::nn::Module& m) {
    torch::serialize::OutputArchive a;
    m.save(a);
    root.write(name, a);
  };
  write_module("generator", *generator_);
  write_module("discriminator", *discriminator_);
  write_module("heads", *heads_);
  write_module("aligns", *align_container_);

  auto write_optim = [&](const char* name, const torch::optim::Adam& opt) {
    torch::serialize::OutputArchive a;
    opt.save(a);
    root.write(name, a);
  };
  write_optim("opt_g", *opt_g_);
  write_optim("opt_d", *opt_d_);
  write_optim("opt_heads", *opt_heads_);

  root.write("torch_rng", cpu_rng_state());
  std::ostringstream rng_text;
  rng_text << sampler_rng_;
  root.write("sampler_rng", torch::IValue(rng_text.str()));

  if (!path.parent_path().empty()) {
    fs::create_directories(path.parent_path());
  }
  root.save_to(path.string());
}

Trainer Trainer::load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) {
    throw DataError(fmt::format("checkpoint not found: {}", path.string()));
  }
  torch::serialize::InputArchive root;
  root.load_from(path.string());

  torch::IValue version;
  root.read("format_version", version);
  if (version.toInt() != 1) {
    throw DataError(fmt::format("unsupported checkpoint format version {}", version.toInt()));
  }
  torch::IValue config_json;
  root.read("config_json", config_json);
  torch::IValue stored_hash;
  root.read("config_hash", stored_hash);
  if (static_cast<uint64_t>(stored_hash.toInt()) !=
      config_hash(config_json.toStringRef())) {
    throw DataError(fmt::format(
        "checkpoint {}: stored config hash does not match its config "
        "(corrupted or hand-edited checkpoint)",
        path.string()));
  }
  TrainConfig cfg = train_config_from_json(
      nlohmann::json::parse(config_json.toStringRef()));

  Trainer trainer(cfg);

  auto read_module = [&](const char* name, torch::nn::Module& m) {
    torch::serialize::InputArchive a;
    root.read(name, a);
    m.load(a);
  };
  read_module("generator", *trainer.generator_);
  read_module("discriminator", *trainer.discriminator_);
  read_module("heads", *trainer.heads_);
  read_module("aligns", *trainer.align_container_);

  auto read_optim = [&](const char* name, torch::optim::Adam& opt) {
    torch::serialize::InputArchive a;
    root.read(name, a);
    opt.load(a);
  };
  read_optim("opt_g", *trainer.opt_g_);
  read_optim("opt_d", *trainer.opt_d_);
  read_optim("opt_heads", *trainer.opt_heads_);

  torch::IValue epoch, iteration, sampler_rng;
  root.read("epoch", epoch);
  root.read("iteration", iteration);
  root.read("sampler_rng", sampler_rng);
  trainer.epoch_ = epoch.toInt();
  trainer.iteration_ = iteration.toInt();
  std::istringstream rng_text(sampler_rng.toStringRef());
  rng_text >> trainer.sampler_rng_;

  torch::Tensor rng_state;
  root.read("torch_rng", rng_state);
  set_cpu_rng_state(rng_state);

  return trainer;
}

namespace {

nlohmann::json metrics_to_json(const TrainMetrics& m) {
  return {{"iteration", m.iteration},
          {"loss_gan_g", m.loss_gan_g},
          {"loss_gan_d", m.loss_gan_d},
          {"loss_multistage", m.loss_multistage},
          {"loss_identity", m.loss_identity},
          {"loss_total", m.loss_total},
          {"sec_per_iter", m.sec_per_iter},
          {"memory_peak", m.memory_peak_bytes},
          {"latent_std", m.latent_std}};
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const UnpairedDataset& data,
              const fs::path& run_dir, const std::string& resolved_config_json,
              const std::optional<fs::path>& resume_from) {
  fs::create_directories(run_dir);
  {
    std::ofstream out(run_dir / "resolved_config.json");
    out << resolved_config_json << "\n";
  }

  auto trainer = resume_from ? Trainer::load_checkpoint(*resume_from) : Trainer(cfg);
  SampleLog dag_log(run_dir / "dag_history.jsonl");
  trainer.set_sample_log(&dag_log);

  std::ofstream metrics(run_dir / "metrics.jsonl", std::ios::app);
  if (!metrics) {
    throw DataError(fmt::format("cannot open metrics stream under {}", run_dir.string()));
  }

  const int64_t epoch_len = data.epoch_length();
  int64_t total = static_cast<int64_t>(cfg.epochs) * epoch_len;
  if (cfg.max_iterations > 0) {
    total = std::min(total, cfg.max_iterations);
  }

  FitResult result;
  result.metrics_path = run_dir / "metrics.jsonl";

  try {
    for (int64_t epoch = trainer.epoch(); epoch < cfg.epochs; ++epoch) {
      trainer.set_epoch(epoch);
      for (int64_t i = 0; i < epoch_len; ++i) {
        if (trainer.iteration() >= total) break;
        const double progress =
            static_cast<double>(trainer.iteration()) / static_cast<double>(total);
        trainer.apply_lr_schedule(progress);
        auto sample = data.get(epoch, i);
        auto m = trainer.train_step(sample.a, sample.b, progress);
        metrics << metrics_to_json(m).dump() << "\n";
        metrics.flush();
      }
      if (trainer.iteration() >= total) {
        trainer.set_epoch(epoch + 1);
        break;
      }
      const bool cadence = cfg.checkpoint_every_epochs > 0 &&
                           ((epoch + 1) % cfg.checkpoint_every_epochs == 0);
      trainer.set_epoch(epoch + 1);
      if (cadence && epoch + 1 < cfg.epochs) {
        trainer.save_checkpoint(run_dir / fmt::format("checkpoint_epoch_{:04d}.pt", epoch + 1));
      }
    }
  } catch (const NumericError&) {
    trainer.save_checkpoint(run_dir / "checkpoint_diagnostic.pt");
    throw;
  }

  result.final_checkpoint = run_dir / "checkpoint_final.pt";
  trainer.save_checkpoint(result.final_checkpoint);
  result.iterations = trainer.iteration();
  return result;
}

}  // namespace stagematch
