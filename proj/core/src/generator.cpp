#include "stagematch/generator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>
#include <sstream>

namespace stagematch {

namespace nn = torch::nn;

void GeneratorConfig::validate() const {
  if (input_channels <= 0 || base_width <= 0) {
    throw ConfigError("generator: channels and base width must be positive");
  }
  if (n_downsamples != 2) {
    throw ConfigError("generator: only the 2-downsample layout is supported");
  }
  if (n_resblocks_encoder < 1 || n_resblocks_decoder < 1) {
    throw ConfigError("generator: at least one residual block per side");
  }
}

ResnetBlockImpl::ResnetBlockImpl(int channels) {
  body_ = nn::Sequential(
      nn::ReflectionPad2d(1),
      nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
      nn::InstanceNorm2d(channels),
      nn::ReLU(nn::ReLUOptions().inplace(true)),
      nn::ReflectionPad2d(1),
      nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
      nn::InstanceNorm2d(channels));
  register_module("body", body_);
}

torch::Tensor ResnetBlockImpl::forward(torch::Tensor x) {
  return x + body_->forward(x);
}

void init_translation_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  if (auto* conv = module.as<nn::Conv2dImpl>()) {
    nn::init::normal_(conv->weight, 0.0, 0.02);
    if (conv->bias.defined()) {
      nn::init::constant_(conv->bias, 0.0);
    }
  }
}

StagedResnetGeneratorImpl::StagedResnetGeneratorImpl(GeneratorConfig cfg)
    : cfg_(cfg) {
  cfg_.validate();
  build();
  apply(init_translation_weights);
}

namespace {

nn::Sequential conv_in_relu(int in_ch, int out_ch, int kernel) {
  const int pad = kernel / 2;
  return nn::Sequential(nn::ReflectionPad2d(pad),
                        nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, kernel)),
                        nn::InstanceNorm2d(out_ch),
                        nn::ReLU(nn::ReLUOptions().inplace(true)));
}

}  // namespace

void StagedResnetGeneratorImpl::build() {
  const int w = cfg_.base_width;

  auto add_enc = [&](int tap, nn::Sequential net, int out_ch, int scale) {
    net = register_module(fmt::format("enc_h{}", tap), net);
    encoder_stages_.push_back({tap, net, out_ch, scale});
  };
  auto add_dec = [&](int tap, nn::Sequential net, int out_ch, int scale) {
    net = register_module(fmt::format("dec_h{}", tap), net);
    decoder_stages_.push_back({tap, net, out_ch, scale});
  };

  add_enc(3, conv_in_relu(cfg_.input_channels, w, 7), w, 0);
  add_enc(6, conv_in_relu(w, 2 * w, 3), 2 * w, 0);
  add_enc(7, nn::Sequential(nn::AvgPool2d(nn::AvgPool2dOptions(2))), 2 * w, 1);
  add_enc(10, conv_in_relu(2 * w, 4 * w, 3), 4 * w, 1);
  add_enc(11, nn::Sequential(nn::AvgPool2d(nn::AvgPool2dOptions(2))), 4 * w, 2);
  for (int i = 0; i < cfg_.n_resblocks_encoder; ++i) {
    add_enc(12 + i, nn::Sequential(ResnetBlock(4 * w)), 4 * w, 2);
  }

  const int b = cfg_.bottleneck_tap();
  for (int i = 0; i < cfg_.n_resblocks_decoder; ++i) {
    add_dec(b + 1 + i, nn::Sequential(ResnetBlock(4 * w)), 4 * w, 2);
  }
  int tap = b + cfg_.n_resblocks_decoder;
  auto upsample = [] {
    return nn::Sequential(nn::Upsample(
        nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
  };
  add_dec(tap + 1, upsample(), 4 * w, 1);
  add_dec(tap + 4, conv_in_relu(4 * w, 2 * w, 3), 2 * w, 1);
  add_dec(tap + 5, upsample(), 2 * w, 0);
  add_dec(tap + 8, conv_in_relu(2 * w, w, 3), w, 0);
  add_dec(tap + 11,
          nn::Sequential(nn::ReflectionPad2d(3),
                         nn::Conv2d(nn::Conv2dOptions(w, cfg_.input_channels, 7)),
                         nn::Tanh()),
          cfg_.input_channels, 0);
}

std::vector<int> StagedResnetGeneratorImpl::encoder_taps() const {
  std::vector<int> taps;
  for (const auto& s : encoder_stages_) taps.push_back(s.tap_index);
  return taps;
}

std::vector<int> StagedResnetGeneratorImpl::decoder_taps() const {
  std::vector<int> taps;
  for (const auto& s : decoder_stages_) taps.push_back(s.tap_index);
  return taps;
}

bool StagedResnetGeneratorImpl::is_encoder_tap(int tap) const {
  auto taps = encoder_taps();
  return std::find(taps.begin(), taps.end(), tap) != taps.end();
}

bool StagedResnetGeneratorImpl::is_decoder_tap(int tap) const {
  auto taps = decoder_taps();
  return std::find(taps.begin(), taps.end(), tap) != taps.end();
}

namespace {

std::string tap_list(const std::vector<int>& taps) {
  std::ostringstream os;
  for (size_t i = 0; i < taps.size(); ++i) {
    os << (i ? ", " : "") << "h_" << taps[i];
  }
  return os.str();
}

}  // namespace

int StagedResnetGeneratorImpl::tap_channels(int tap) const {
  for (const auto& s : encoder_stages_) {
    if (s.tap_index == tap) return s.out_channels;
  }
  for (const auto& s : decoder_stages_) {
    if (s.tap_index == tap) return s.out_channels;
  }
  throw ConfigError(fmt::format("unknown tap h_{}; valid taps: {}", tap,
                                tap_list(encoder_taps()) + ", " + tap_list(decoder_taps())));
}

std::pair<int64_t, int64_t> StagedResnetGeneratorImpl::tap_spatial(
    int tap, int64_t height, int64_t width) const {
  for (const auto& stages : {&encoder_stages_, &decoder_stages_}) {
    for (const auto& s : *stages) {
      if (s.tap_index == tap) {
        return {height >> s.scale_log2, width >> s.scale_log2};
      }
    }
  }
  throw ConfigError(fmt::format("unknown tap h_{}", tap));
}

void StagedResnetGeneratorImpl::check_image_range(const ImageBatch& x) {
  if (x.dim() != 4) {
    throw DimensionError(
        fmt::format("expected rank-4 image batch, got rank {}", x.dim()));
  }
}

std::pair<StageFeatureMap, TapFeatures> StagedResnetGeneratorImpl::encode(
    const ImageBatch& x, const std::vector<int>& taps) {
  check_image_range(x);
  std::set<int> wanted(taps.begin(), taps.end());
  for (int tap : wanted) {
    if (!is_encoder_tap(tap)) {
      throw ConfigError(fmt::format("h_{} is not an encoder tap; valid encoder taps: {}",
                                    tap, tap_list(encoder_taps())));
    }
  }

  TapFeatures collected;
  torch::Tensor h = x;
  for (auto& stage : encoder_stages_) {
    h = stage.net->forward(h);
    if (wanted.count(stage.tap_index)) {
      collected[stage.tap_index] = {stage.tap_index, h};
    }
  }
  return {StageFeatureMap{cfg_.bottleneck_tap(), h}, std::move(collected)};
}

std::pair<ImageBatch, TapFeatures> StagedResnetGeneratorImpl::decode(
    const StageFeatureMap& bottleneck, const std::vector<int>& taps) {
  const auto& t = bottleneck.tensor;
  check_image_range(t);
  const int expected_ch = 4 * cfg_.base_width;
  if (t.size(1) != expected_ch) {
    throw DimensionError(fmt::format(
        "bottleneck channel mismatch: expected {}, got {}", expected_ch, t.size(1)));
  }
  std::set<int> wanted(taps.begin(), taps.end());
  for (int tap : wanted) {
    if (!is_decoder_tap(tap)) {
      throw ConfigError(fmt::format("h_{} is not a decoder tap; valid decoder taps: {}",
                                    tap, tap_list(decoder_taps())));
    }
  }

  TapFeatures collected;
  torch::Tensor h = t;
  for (auto& stage : decoder_stages_) {
    h = stage.net->forward(h);
    if (wanted.count(stage.tap_index)) {
      collected[stage.tap_index] = {stage.tap_index, h};
    }
  }
  return {h, std::move(collected)};
}

ImageBatch StagedResnetGeneratorImpl::translate(const ImageBatch& x) {
  auto [bottleneck, enc_taps] = encode(x);
  auto [image, dec_taps] = decode(bottleneck);
  return image;
}

}  // namespace stagematch
