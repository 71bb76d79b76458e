// Operator entry points: train, translate, evaluate, synth-toy,
// inspect-sampling, weight-density.

#include <torch/torch.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagematch/config.hpp"
#include "stagematch/data.hpp"
#include "stagematch/eval.hpp"
#include "stagematch/training.hpp"

namespace fs = std::filesystem;
using namespace stagematch;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<std::pair<std::string, std::string>> parse_sets(
    const std::vector<std::string>& raw) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : raw) {
    auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError("--set expects key=value, got '" + entry + "'");
    }
    out.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return out;
}

int cmd_train(const std::string& config_file, std::vector<std::string> sets,
              const std::string& resume) {
  auto overrides = parse_sets(sets);
  auto run = config_file.empty() ? RunConfig::resolve(overrides)
                                 : RunConfig::resolve(config_file, overrides);
  if (const char* env_root = std::getenv("STAGEMATCH_OUTPUT_ROOT")) {
    run.output_root = env_root;
  }
  if (run.data.domain_a_dir.empty() || run.data.domain_b_dir.empty()) {
    throw UsageError(
        "dataset paths missing: set data.domain_a_dir and data.domain_b_dir "
        "via --config or --set");
  }

  UnpairedDataset data(run.data);
  const fs::path run_dir = run.output_root / run.run_name;
  std::optional<fs::path> resume_from;
  if (!resume.empty()) resume_from = resume;

  auto resolved = run.resolved();
  resolved["tool_version"] = "stagematch 0.1.0";
  auto result = fit(run.train, data, run_dir, resolved.dump(2), resume_from);
  std::cout << "run complete: " << result.iterations << " iterations\n"
            << "final checkpoint: " << result.final_checkpoint.string() << "\n"
            << "metrics: " << result.metrics_path.string() << "\n";
  return 0;
}

int cmd_translate(const std::string& checkpoint, const std::string& input_dir,
                  const std::string& output_dir) {
  auto trainer = Trainer::load_checkpoint(checkpoint);
  auto files = list_images(input_dir);
  fs::create_directories(output_dir);
  torch::NoGradGuard no_grad;
  const int size = trainer.config().image_size;
  for (const auto& file : files) {
    auto out = trainer.generator()->translate(load_image(file, size));
    save_image(out, fs::path(output_dir) / file.filename());
  }
  std::cout << "translated " << files.size() << " images to " << output_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& real_dir, const std::string& fake_dir,
                 const std::string& extractor_path, int image_size,
                 const std::string& json_out) {
  std::unique_ptr<FeatureExtractor> extractor;
  if (extractor_path.empty()) {
    extractor = std::make_unique<RandomConvEmbedder>();
  } else {
    extractor = std::make_unique<PretrainedExtractor>(extractor_path);
  }
  const double score = fid_between_dirs(real_dir, fake_dir, *extractor, image_size);
  nlohmann::json result{{"fid", score},
                        {"real_dir", real_dir},
                        {"fake_dir", fake_dir},
                        {"extractor", extractor_path.empty() ? "builtin" : extractor_path},
                        {"image_size", image_size}};
  std::cout << "FID = " << score << "\n";
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    out << result.dump(2) << "\n";
  }
  return 0;
}

int cmd_synth_toy(const std::string& out_dir, int n_images, int size,
                  double hue_rotation, uint64_t seed) {
  ToyDomainSpec spec;
  spec.n_images = n_images;
  spec.size = size;
  spec.hue_rotation_deg = hue_rotation;
  spec.seed = seed;
  synth_toy(spec, out_dir);
  std::cout << "wrote " << n_images << " images per domain under " << out_dir << "\n";
  return 0;
}

int cmd_inspect_sampling(const std::string& history, int grid_h, int grid_w,
                         const std::string& png_out) {
  auto map = sampling_frequency_map(history, grid_h, grid_w, png_out);
  std::cout << "frequency map " << grid_h << "x" << grid_w
            << ", peak-normalized; mean = " << map.mean().item<double>() << "\n";
  if (!png_out.empty()) std::cout << "heatmap: " << png_out << "\n";
  return 0;
}

int cmd_weight_density(const std::string& checkpoint, const std::string& component,
                       const std::string& csv_out, const std::string& png_out) {
  auto data = weight_density(checkpoint, component, csv_out, png_out);
  std::cout << component << ": " << data.n_weights << " weights, mean = "
            << data.mean << ", std = " << data.stddev << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unpaired image translation with stage-matched patch features"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a translation model");
  std::string config_file, resume;
  std::vector<std::string> sets;
  train->add_option("--config", config_file, "JSON config file");
  train->add_option("--set", sets,
                    "Dotted-key override, e.g. --set dag.beta=0.5 (repeatable)");
  train->add_option("--resume", resume, "Checkpoint to resume from");
  // Convenience spellings for the most common overrides.
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"--epochs", "train.epochs"},
           {"--seed", "train.seed"},
           {"--data-a", "data.domain_a_dir"},
           {"--data-b", "data.domain_b_dir"},
           {"--image-size", "data.image_size"},
           {"--output-root", "output_root"},
           {"--run-name", "run_name"}}) {
    train->add_option_function<std::string>(
        flag, [&sets, key = key](const std::string& v) { sets.push_back(key + "=" + v); });
  }

  // translate
  auto* translate = app.add_subcommand("translate", "Apply a trained generator");
  std::string checkpoint, input_dir, output_dir;
  translate->add_option("checkpoint", checkpoint)->required();
  translate->add_option("input", input_dir)->required();
  translate->add_option("output", output_dir)->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "FID between two image sets");
  std::string real_dir, fake_dir, extractor_path, json_out;
  int eval_size = 64;
  evaluate->add_option("real", real_dir)->required();
  evaluate->add_option("fake", fake_dir)->required();
  evaluate->add_option("--extractor", extractor_path,
                       "TorchScript feature extractor (default: builtin embedder)");
  evaluate->add_option("--image-size", eval_size);
  evaluate->add_option("--json-out", json_out, "Write the result as JSON");

  // synth-toy
  auto* synth = app.add_subcommand("synth-toy", "Generate the synthetic hue-shift task");
  std::string toy_out;
  int toy_n = 16, toy_size = 64;
  double toy_hue = 120.0;
  uint64_t toy_seed = 0;
  synth->add_option("out", toy_out)->required();
  synth->add_option("--n", toy_n, "Images per domain");
  synth->add_option("--size", toy_size);
  synth->add_option("--hue-rotation", toy_hue, "Domain-B hue offset in degrees");
  synth->add_option("--seed", toy_seed);

  // inspect-sampling
  auto* inspect = app.add_subcommand("inspect-sampling",
                                     "Sampling-frequency heatmap from a DAG history");
  std::string history, heat_png;
  int grid_h = 16, grid_w = 16;
  inspect->add_option("history", history)->required();
  inspect->add_option("--grid-h", grid_h);
  inspect->add_option("--grid-w", grid_w);
  inspect->add_option("--png", heat_png, "Heatmap output path");

  // weight-density
  auto* density = app.add_subcommand("weight-density",
                                     "Weight histogram of a checkpoint component");
  std::string d_checkpoint, component, d_csv, d_png;
  density->add_option("checkpoint", d_checkpoint)->required();
  density->add_option("component", component)
      ->required()
      ->description("generator, discriminator or heads");
  density->add_option("--csv", d_csv);
  density->add_option("--png", d_png);

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(config_file, sets, resume);
    if (translate->parsed()) return cmd_translate(checkpoint, input_dir, output_dir);
    if (evaluate->parsed()) {
      return cmd_evaluate(real_dir, fake_dir, extractor_path, eval_size, json_out);
    }
    if (synth->parsed()) {
      return cmd_synth_toy(toy_out, toy_n, toy_size, toy_hue, toy_seed);
    }
    if (inspect->parsed()) {
      return cmd_inspect_sampling(history, grid_h, grid_w, heat_png);
    }
    if (density->parsed()) {
      return cmd_weight_density(d_checkpoint, component, d_csv, d_png);
    }
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
