#include "stagematch/config.hpp"

#include <fmt/format.h>

#include <fstream>

namespace stagematch {

using nlohmann::json;

json to_json(const TrainConfig& cfg) {
  json pairs = json::array();
  for (const auto& p : cfg.stages.pairs) {
    pairs.push_back({p.encoder_tap, p.decoder_tap});
  }
  return {
      {"train",
       {{"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"lr_g", cfg.lr_g},
        {"lr_d", cfg.lr_d},
        {"lr_heads", cfg.lr_heads},
        {"adam_beta1", cfg.adam_beta1},
        {"adam_beta2", cfg.adam_beta2},
        {"decay_start_fraction", cfg.decay_start_fraction},
        {"identity_half", cfg.identity_half},
        {"stop_gradient", cfg.stop_gradient},
        {"seed", cfg.seed},
        {"image_size", cfg.image_size},
        {"checkpoint_every_epochs", cfg.checkpoint_every_epochs},
        {"max_iterations", cfg.max_iterations}}},
      {"loss",
       {{"lambda_nce", cfg.loss_weights.lambda_nce},
        {"lambda_idt", cfg.loss_weights.lambda_idt}}},
      {"dag",
       {{"k", cfg.dag.oversampling_ratio},
        {"beta", cfg.dag.importance_ratio},
        {"dedupe", cfg.dag.dedupe},
        {"rank_ascending", cfg.dag.rank_ascending}}},
      {"stages",
       {{"pairs", pairs},
        {"patches_per_pair", cfg.stages.patches_per_pair},
        {"asymmetric", cfg.stages.asymmetric}}},
      {"generator",
       {{"input_channels", cfg.generator.input_channels},
        {"base_width", cfg.generator.base_width},
        {"n_downsamples", cfg.generator.n_downsamples},
        {"n_resblocks_encoder", cfg.generator.n_resblocks_encoder},
        {"n_resblocks_decoder", cfg.generator.n_resblocks_decoder}}}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  if (j.contains("train")) {
    const auto& t = j.at("train");
    read(t, "epochs", cfg.epochs);
    read(t, "batch_size", cfg.batch_size);
    read(t, "lr_g", cfg.lr_g);
    read(t, "lr_d", cfg.lr_d);
    read(t, "lr_heads", cfg.lr_heads);
    read(t, "adam_beta1", cfg.adam_beta1);
    read(t, "adam_beta2", cfg.adam_beta2);
    read(t, "decay_start_fraction", cfg.decay_start_fraction);
    read(t, "identity_half", cfg.identity_half);
    read(t, "stop_gradient", cfg.stop_gradient);
    read(t, "seed", cfg.seed);
    read(t, "image_size", cfg.image_size);
    read(t, "checkpoint_every_epochs", cfg.checkpoint_every_epochs);
    read(t, "max_iterations", cfg.max_iterations);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    read(l, "lambda_nce", cfg.loss_weights.lambda_nce);
    read(l, "lambda_idt", cfg.loss_weights.lambda_idt);
  }
  if (j.contains("dag")) {
    const auto& d = j.at("dag");
    read(d, "k", cfg.dag.oversampling_ratio);
    read(d, "beta", cfg.dag.importance_ratio);
    read(d, "dedupe", cfg.dag.dedupe);
    read(d, "rank_ascending", cfg.dag.rank_ascending);
  }
  if (j.contains("stages")) {
    const auto& s = j.at("stages");
    if (s.contains("pairs")) {
      cfg.stages.pairs.clear();
      for (const auto& p : s.at("pairs")) {
        if (!p.is_array() || p.size() != 2) {
          throw ConfigError("stages.pairs entries must be [encoder_tap, decoder_tap]");
        }
        cfg.stages.pairs.push_back({p[0].get<int>(), p[1].get<int>()});
      }
    }
    read(s, "patches_per_pair", cfg.stages.patches_per_pair);
    read(s, "asymmetric", cfg.stages.asymmetric);
  }
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    read(g, "input_channels", cfg.generator.input_channels);
    read(g, "base_width", cfg.generator.base_width);
    read(g, "n_downsamples", cfg.generator.n_downsamples);
    read(g, "n_resblocks_encoder", cfg.generator.n_resblocks_encoder);
    read(g, "n_resblocks_decoder", cfg.generator.n_resblocks_decoder);
  }
  cfg.dag.n_patches = cfg.stages.patches_per_pair;
  return cfg;
}

void apply_override(json& tree, const std::string& key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // plain string
  }
  json* node = &tree;
  size_t start = 0;
  while (true) {
    size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) {
      throw ConfigError(fmt::format("bad override key '{}'", key));
    }
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

json RunConfig::resolved() const {
  json j = to_json(train);
  j["data"] = {{"domain_a_dir", data.domain_a_dir.string()},
               {"domain_b_dir", data.domain_b_dir.string()},
               {"image_size", data.image_size},
               {"shuffle_seed", data.shuffle_seed},
               {"horizontal_flip", data.horizontal_flip}};
  j["output_root"] = output_root.string();
  j["run_name"] = run_name;
  return j;
}

RunConfig RunConfig::resolve(
    const std::filesystem::path& config_file,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  json tree = RunConfig{}.resolved();  // struct defaults
  // Drop the placeholder so "explicitly set" is detectable after layering.
  tree["data"].erase("shuffle_seed");

  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) {
      throw DataError(fmt::format("cannot read config file {}", config_file.string()));
    }
    json file_cfg;
    try {
      in >> file_cfg;
    } catch (const json::parse_error& e) {
      throw ConfigError(fmt::format("config file {}: {}", config_file.string(), e.what()));
    }
    tree.merge_patch(file_cfg);
  }
  for (const auto& [key, value] : overrides) {
    apply_override(tree, key, value);
  }

  RunConfig cfg;
  cfg.train = train_config_from_json(tree);
  if (tree.contains("data")) {
    const auto& d = tree.at("data");
    std::string a, b;
    read(d, "domain_a_dir", a);
    read(d, "domain_b_dir", b);
    cfg.data.domain_a_dir = a;
    cfg.data.domain_b_dir = b;
    read(d, "image_size", cfg.data.image_size);
    read(d, "shuffle_seed", cfg.data.shuffle_seed);
    read(d, "horizontal_flip", cfg.data.horizontal_flip);
  }
  if (tree.contains("output_root")) {
    cfg.output_root = tree.at("output_root").get<std::string>();
  }
  if (tree.contains("run_name")) {
    cfg.run_name = tree.at("run_name").get<std::string>();
  }
  // The dataset seed follows the training seed unless explicitly set.
  if (!tree.contains("data") || !tree.at("data").contains("shuffle_seed")) {
    cfg.data.shuffle_seed = cfg.train.seed;
  }
  cfg.train.image_size = cfg.data.image_size;
  return cfg;
}

}  // namespace stagematch
