#include <torch/torch.h>

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stagematch/config.hpp"
#include "stagematch/training.hpp"

using namespace stagematch;
namespace fs = std::filesystem;

namespace {

TrainConfig desk_config() {
  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.generator.base_width = 8;
  cfg.stages.patches_per_pair = 16;
  cfg.seed = 42;
  return cfg;
}

ImageBatch toy_image(uint64_t seed) {
  torch::manual_seed(seed);
  return torch::rand({1, 3, 64, 64}) * 2 - 1;
}

}  // namespace

TEST_CASE("learning-rate schedule: flat then linear to zero") {
  CHECK(lr_factor(0.0) == doctest::Approx(1.0));
  CHECK(lr_factor(0.5) == doctest::Approx(1.0));
  CHECK(lr_factor(0.75) == doctest::Approx(0.5));
  CHECK(lr_factor(1.0) == doctest::Approx(0.0));
  CHECK(lr_factor(0.9, 0.8) == doctest::Approx(0.5));
  CHECK(lr_factor(0.2, 0.0) == doctest::Approx(0.8));
}

TEST_CASE("identity schedule is active strictly before the halfway point") {
  CHECK(identity_active(0.0));
  CHECK(identity_active(0.499));
  CHECK_FALSE(identity_active(0.5));
  CHECK_FALSE(identity_active(1.0));
}

TEST_CASE("optimizers run on unbalanced two-time-scale rates") {
  Trainer trainer(desk_config());
  auto lrs = trainer.current_learning_rates();
  REQUIRE(lrs.size() == 3);
  CHECK(lrs[0] == doctest::Approx(5e-5));
  CHECK(lrs[1] == doctest::Approx(2e-4));
  CHECK(lrs[2] == doctest::Approx(5e-5));

  trainer.apply_lr_schedule(0.75);
  lrs = trainer.current_learning_rates();
  CHECK(lrs[0] == doctest::Approx(2.5e-5));
  CHECK(lrs[1] == doctest::Approx(1e-4));
  CHECK(lrs[2] == doctest::Approx(2.5e-5));
}

TEST_CASE("train steps are bit-reproducible for a fixed seed") {
  auto x = toy_image(1);
  auto y = toy_image(2);

  Trainer a(desk_config());
  auto ma0 = a.train_step(x, y, 0.0);
  auto ma1 = a.train_step(x, y, 0.1);

  Trainer b(desk_config());
  auto mb0 = b.train_step(x, y, 0.0);
  auto mb1 = b.train_step(x, y, 0.1);

  CHECK(ma0.loss_total == mb0.loss_total);
  CHECK(ma0.loss_gan_d == mb0.loss_gan_d);
  CHECK(ma0.loss_multistage == mb0.loss_multistage);
  CHECK(ma1.loss_total == mb1.loss_total);
  CHECK(ma0.latent_std == mb0.latent_std);
  CHECK(ma0.latent_std > 0);
  CHECK(ma0.loss_identity > 0);  // first half: identity term active

  auto pa = a.generator()->parameters();
  auto pb = b.generator()->parameters();
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].equal(pb[i]));
  }
}

TEST_CASE("identity term switches off in the second half") {
  Trainer trainer(desk_config());
  auto m = trainer.train_step(toy_image(1), toy_image(2), 0.6);
  CHECK(m.loss_identity == 0.0);
}

TEST_CASE("a step moves discriminator, generator and head weights") {
  Trainer trainer(desk_config());
  auto g0 = trainer.generator()->parameters()[0].clone();
  auto d0 = trainer.discriminator()->parameters()[0].clone();
  auto h0 = trainer.heads()->parameters()[0].clone();
  trainer.train_step(toy_image(1), toy_image(2), 0.0);
  CHECK_FALSE(trainer.generator()->parameters()[0].equal(g0));
  CHECK_FALSE(trainer.discriminator()->parameters()[0].equal(d0));
  CHECK_FALSE(trainer.heads()->parameters()[0].equal(h0));
}

TEST_CASE("multistage gradients reach the encoder stages") {
  auto cfg = desk_config();
  cfg.loss_weights.lambda_idt = 0;  // isolate the patch-matching objective
  Trainer trainer(cfg);
  trainer.train_step(toy_image(1), toy_image(2), 0.6);
  // After one full step every early encoder conv carries a gradient.
  bool any_early_grad = false;
  for (const auto& p : trainer.generator()->named_parameters()) {
    if (p.value().grad().defined() && p.value().grad().abs().sum().item<double>() > 0) {
      any_early_grad = true;
      break;
    }
  }
  CHECK(any_early_grad);
}

TEST_CASE("checkpoint round trip restores weights and RNG streams bitwise") {
  auto dir = fs::temp_directory_path() / "stagematch_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto path = dir / "ckpt.pt";

  auto x = toy_image(1);
  auto y = toy_image(2);

  Trainer a(desk_config());
  a.train_step(x, y, 0.0);
  a.save_checkpoint(path);

  auto b = Trainer::load_checkpoint(path);
  CHECK(b.iteration() == a.iteration());
  CHECK(b.config().seed == a.config().seed);
  {
    auto pa = a.generator()->parameters();
    auto pb = b.generator()->parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].equal(pb[i]));
    }
  }

  // Resuming yields the exact step the uninterrupted run would have taken.
  auto ma = a.train_step(x, y, 0.1);
  auto mb = b.train_step(x, y, 0.1);
  CHECK(ma.loss_total == mb.loss_total);
  CHECK(ma.loss_gan_d == mb.loss_gan_d);
  CHECK(ma.loss_multistage == mb.loss_multistage);
  CHECK(ma.latent_std == mb.latent_std);

  CHECK_THROWS_AS(Trainer::load_checkpoint(dir / "missing.pt"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("config hash is stable and content-sensitive") {
  CHECK(Trainer::config_hash("abc") == Trainer::config_hash("abc"));
  CHECK(Trainer::config_hash("abc") != Trainer::config_hash("abd"));
  CHECK(Trainer::config_hash("") == 14695981039346656037ULL);  // FNV-1a offset basis
}

TEST_CASE("fit writes one metrics record per iteration plus run artifacts") {
  auto dir = fs::temp_directory_path() / "stagematch_test_fit";
  fs::remove_all(dir);
  ToyDomainSpec toy;
  toy.n_images = 4;
  toy.size = 64;
  toy.seed = 1;
  synth_toy(toy, dir / "data");

  UnpairedDatasetSpec ds_spec;
  ds_spec.domain_a_dir = dir / "data" / "trainA";
  ds_spec.domain_b_dir = dir / "data" / "trainB";
  ds_spec.image_size = 64;
  UnpairedDataset data(ds_spec);

  auto cfg = desk_config();
  cfg.epochs = 1;
  auto run_dir = dir / "run";
  auto result = fit(cfg, data, run_dir, to_json(cfg).dump());

  CHECK(result.iterations == 4);
  CHECK(fs::exists(result.final_checkpoint));
  CHECK(fs::exists(run_dir / "resolved_config.json"));
  CHECK(fs::exists(run_dir / "dag_history.jsonl"));

  std::ifstream metrics(result.metrics_path);
  std::string line;
  int records = 0;
  while (std::getline(metrics, line)) {
    if (!line.empty()) ++records;
  }
  CHECK(records == 4);

  SUBCASE("max_iterations caps the run") {
    auto capped = cfg;
    capped.max_iterations = 2;
    auto r2 = fit(capped, data, dir / "run2", to_json(capped).dump());
    CHECK(r2.iterations == 2);
  }
  fs::remove_all(dir);
}

TEST_CASE("invalid configurations are rejected up front") {
  auto cfg = desk_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(Trainer{cfg}, ConfigError);

  cfg = desk_config();
  cfg.lr_g = -1;
  CHECK_THROWS_AS(Trainer{cfg}, ConfigError);

  cfg = desk_config();
  cfg.stages.pairs = {{7, 20}};  // not mirrored
  CHECK_THROWS_AS(Trainer{cfg}, ConfigError);

  cfg = desk_config();
  cfg.batch_size = 2;
  CHECK_THROWS_AS(Trainer{cfg}, ConfigError);
}

TEST_CASE("asymmetric stage set trains with per-pair alignment") {
  auto cfg = desk_config();
  cfg.stages.asymmetric = true;
  cfg.stages.pairs = {{3, 24}, {7, 20}, {13, 17}};
  cfg.stages.patches_per_pair = 16;
  Trainer trainer(cfg);
  auto m = trainer.train_step(toy_image(1), toy_image(2), 0.0);
  CHECK(std::isfinite(m.loss_total));
  CHECK(m.loss_multistage > 0);
}
