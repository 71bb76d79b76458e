#include "stagematch/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace stagematch;
namespace fs = std::filesystem;

TEST_CASE("train config survives a JSON round trip") {
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.lr_g = 1e-4;
  cfg.seed = 99;
  cfg.dag.importance_ratio = 0.25;
  cfg.stages.pairs = {{7, 24}};
  cfg.stages.patches_per_pair = 64;
  cfg.generator.base_width = 32;

  auto back = train_config_from_json(to_json(cfg));
  CHECK(back.epochs == 7);
  CHECK(back.lr_g == doctest::Approx(1e-4));
  CHECK(back.seed == 99);
  CHECK(back.dag.importance_ratio == doctest::Approx(0.25));
  REQUIRE(back.stages.pairs.size() == 1);
  CHECK(back.stages.pairs[0].encoder_tap == 7);
  CHECK(back.stages.pairs[0].decoder_tap == 24);
  CHECK(back.generator.base_width == 32);
  // The sampler's K always tracks the per-pair patch count.
  CHECK(back.dag.n_patches == 64);
}

TEST_CASE("dotted overrides edit nested keys and parse JSON values") {
  nlohmann::json tree = {{"train", {{"epochs", 2}}}};
  apply_override(tree, "train.epochs", "9");
  CHECK(tree["train"]["epochs"] == 9);
  apply_override(tree, "dag.beta", "0.75");
  CHECK(tree["dag"]["beta"] == 0.75);
  apply_override(tree, "stages.pairs", "[[7,24]]");
  CHECK(tree["stages"]["pairs"][0][1] == 24);
  apply_override(tree, "run_name", "ablation-a");  // unparseable -> string
  CHECK(tree["run_name"] == "ablation-a");
  CHECK_THROWS_AS(apply_override(tree, "", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(tree, "train..epochs", "1"), ConfigError);
}

TEST_CASE("layering: defaults < file < overrides") {
  auto dir = fs::temp_directory_path() / "stagematch_test_cfg";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto file = dir / "run.json";
  {
    std::ofstream out(file);
    out << R"({"train": {"epochs": 5, "seed": 7}, "dag": {"beta": 0.9},
               "data": {"domain_a_dir": "/tmp/a", "domain_b_dir": "/tmp/b",
                        "image_size": 64}})";
  }

  auto cfg = RunConfig::resolve(file, {{"train.epochs", "3"}});
  CHECK(cfg.train.epochs == 3);                                 // override wins
  CHECK(cfg.train.seed == 7);                                   // file wins
  CHECK(cfg.train.dag.importance_ratio == doctest::Approx(0.9));
  CHECK(cfg.train.lr_d == doctest::Approx(2e-4));               // default kept
  CHECK(cfg.data.domain_a_dir == "/tmp/a");
  CHECK(cfg.data.image_size == 64);
  // Derived wiring: the dataset seed and the training image size follow.
  CHECK(cfg.data.shuffle_seed == 7);
  CHECK(cfg.train.image_size == 64);

  SUBCASE("explicit shuffle seed decouples from the training seed") {
    auto cfg2 = RunConfig::resolve(file, {{"data.shuffle_seed", "123"}});
    CHECK(cfg2.data.shuffle_seed == 123);
    CHECK(cfg2.train.seed == 7);
  }
  SUBCASE("missing file is a data error, malformed file a config error") {
    CHECK_THROWS_AS(RunConfig::resolve(dir / "nope.json", {}), DataError);
    auto broken = dir / "broken.json";
    std::ofstream(broken) << "{not json";
    CHECK_THROWS_AS(RunConfig::resolve(broken, {}), ConfigError);
  }
  fs::remove_all(dir);
}

TEST_CASE("resolved JSON is complete enough to reproduce the run") {
  RunConfig cfg;
  cfg.run_name = "smoke";
  auto j = cfg.resolved();
  CHECK(j.contains("train"));
  CHECK(j.contains("loss"));
  CHECK(j.contains("dag"));
  CHECK(j.contains("stages"));
  CHECK(j.contains("generator"));
  CHECK(j.contains("data"));
  CHECK(j["run_name"] == "smoke");
  CHECK(j["train"]["lr_d"] == doctest::Approx(2e-4));
  CHECK(j["stages"]["pairs"].size() == 2);
}
