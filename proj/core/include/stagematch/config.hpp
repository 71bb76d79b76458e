#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagematch/data.hpp"
#include "stagematch/training.hpp"

namespace stagematch {

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Fully layered run configuration: struct defaults < config file < dotted
/// key overrides (e.g. "dag.beta=0.5").
struct RunConfig {
  TrainConfig train;
  UnpairedDatasetSpec data;
  std::filesystem::path output_root = "runs";
  std::string run_name = "run";

  /// Canonical JSON of the fully resolved configuration; written alongside
  /// every run.
  nlohmann::json resolved() const;

  static RunConfig resolve(
      const std::filesystem::path& config_file,
      const std::vector<std::pair<std::string, std::string>>& overrides);
  static RunConfig resolve(
      const std::vector<std::pair<std::string, std::string>>& overrides) {
    return resolve({}, overrides);
  }
};

/// Applies a dotted-key override ("train.epochs", "42") to a JSON tree.
/// Values parse as JSON when possible, otherwise as strings.
void apply_override(nlohmann::json& tree, const std::string& key,
                    const std::string& value);

}  // namespace stagematch
