#include "stagematch/eval.hpp"

#include <fmt/format.h>
#include <torch/script.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "stagematch/data.hpp"
#include "stagematch/training.hpp"

namespace stagematch {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

FeatureStats compute_stats(const torch::Tensor& features) {
  if (features.dim() != 2) {
    throw DimensionError("compute_stats: expected an (n, d) feature matrix");
  }
  const int64_t n = features.size(0);
  if (n < 2) {
    throw DimensionError(fmt::format("compute_stats: need n >= 2 samples, got {}", n));
  }
  auto f = features.to(torch::kDouble);
  auto mean = f.mean(0);
  auto centered = f - mean.unsqueeze(0);
  auto cov = centered.t().mm(centered) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.t());
  return {mean, cov, n};
}

double fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size(0) != b.mean.size(0)) {
    throw DimensionError(fmt::format("fid: feature dimensions differ ({} vs {})",
                                     a.mean.size(0), b.mean.size(0)));
  }
  auto sa = a.covariance.to(torch::kDouble);
  auto sb = b.covariance.to(torch::kDouble);

  const double mean_term = (a.mean - b.mean).pow(2).sum().item<double>();

  auto [wa, va] = torch::linalg_eigh(sa);
  auto sa_half = va.mm(torch::diag(wa.clamp_min(0).sqrt())).mm(va.t());
  auto m = sa_half.mm(sb).mm(sa_half);
  m = 0.5 * (m + m.t());
  auto [wm, vm] = torch::linalg_eigh(m);

  const double scale = std::max(1.0, wm.abs().max().item<double>());
  if (wm.min().item<double>() < -1e-8 * scale) {
    throw NumericError(fmt::format(
        "fid: matrix square root failed (eigenvalue {} below tolerance)",
        wm.min().item<double>()));
  }
  const double trace_term = sa.trace().item<double>() + sb.trace().item<double>() -
                            2.0 * wm.clamp_min(0).sqrt().sum().item<double>();

  const double value = mean_term + trace_term;
  if (value < -1e-6) {
    throw NumericError(fmt::format("fid: negative distance {} beyond tolerance", value));
  }
  return std::max(value, 0.0);
}

RandomConvEmbedder::RandomConvEmbedder(uint64_t seed, int64_t dim) : dim_(dim) {
  namespace nn = torch::nn;
  // Construct under a pinned RNG state so the embedding is identical across
  // runs regardless of surrounding RNG use.
  auto saved = at::detail::getDefaultCPUGenerator().get_state();
  torch::manual_seed(seed);
  net_ = nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(3, 32, 3).stride(2).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(32, 64, 3).stride(2).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(64, dim, 3).stride(2).padding(1)), nn::ReLU());
  net_->eval();
  auto gen = at::detail::getDefaultCPUGenerator();
  gen.set_state(saved);
}

torch::Tensor RandomConvEmbedder::extract(const ImageBatch& images) {
  torch::NoGradGuard no_grad;
  return net_->forward(images).mean({2, 3});
}

PretrainedExtractor::PretrainedExtractor(const fs::path& weights_path, int64_t dim)
    : dim_(dim) {
  if (!fs::exists(weights_path)) {
    throw DataError(fmt::format(
        "pretrained extractor weights not found: {} (expected a TorchScript "
        "module exporting an (n, d) feature head)",
        weights_path.string()));
  }
  module_ = std::make_shared<torch::jit::Module>(torch::jit::load(weights_path.string()));
  module_->eval();
}

torch::Tensor PretrainedExtractor::extract(const ImageBatch& images) {
  torch::NoGradGuard no_grad;
  auto resized = F::interpolate(images, F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{299, 299})
                                            .mode(torch::kBicubic)
                                            .align_corners(false));
  auto out = module_->forward({resized}).toTensor();
  return out.reshape({out.size(0), -1});
}

torch::Tensor extract_features_from_dir(const fs::path& dir,
                                        FeatureExtractor& extractor, int image_size) {
  auto files = list_images(dir);
  std::vector<torch::Tensor> rows;
  const size_t chunk = 16;
  for (size_t i = 0; i < files.size(); i += chunk) {
    std::vector<torch::Tensor> batch;
    for (size_t j = i; j < std::min(i + chunk, files.size()); ++j) {
      batch.push_back(load_image(files[j], image_size));
    }
    rows.push_back(extractor.extract(torch::cat(batch, 0)));
  }
  return torch::cat(rows, 0);
}

double fid_between_dirs(const fs::path& real_dir, const fs::path& fake_dir,
                        FeatureExtractor& extractor, int image_size) {
  auto real = compute_stats(extract_features_from_dir(real_dir, extractor, image_size));
  auto fake = compute_stats(extract_features_from_dir(fake_dir, extractor, image_size));
  return fid(real, fake);
}

torch::Tensor sampling_frequency_map(const fs::path& history_log, int64_t grid_height,
                                     int64_t grid_width, const fs::path& png_out) {
  std::ifstream in(history_log);
  if (!in) {
    throw DataError(fmt::format("cannot read history log {}", history_log.string()));
  }
  auto counts = torch::zeros({grid_height, grid_width}, torch::kDouble);
  auto acc = counts.accessor<double, 2>();
  std::string line;
  int64_t matched = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line);
    auto grid = rec.at("grid");
    if (grid[0].get<int64_t>() != grid_height || grid[1].get<int64_t>() != grid_width) {
      continue;
    }
    for (int64_t idx : rec.at("indices").get<std::vector<int64_t>>()) {
      acc[idx / grid_width][idx % grid_width] += 1.0;
    }
    ++matched;
  }
  if (matched == 0) {
    throw DataError(fmt::format("no history entries for a {}x{} grid in {}",
                                grid_height, grid_width, history_log.string()));
  }
  auto max = counts.max().item<double>();
  auto normalized = max > 0 ? counts / max : counts;
  if (!png_out.empty()) {
    auto img = (normalized * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
    cv::Mat gray(static_cast<int>(grid_height), static_cast<int>(grid_width), CV_8UC1,
                 img.data_ptr());
    if (!png_out.parent_path().empty()) {
      fs::create_directories(png_out.parent_path());
    }
    cv::imwrite(png_out.string(), gray);
  }
  return normalized;
}

DensityPlotData weight_density(const fs::path& checkpoint, const std::string& component,
                               const fs::path& csv_out, const fs::path& png_out,
                               int bins) {
  auto trainer = Trainer::load_checkpoint(checkpoint);

  std::vector<std::pair<std::string, torch::Tensor>> named;
  auto collect = [&](const std::string& prefix, torch::nn::Module& module) {
    for (const auto& p : module.named_parameters()) {
      named.emplace_back(prefix + "." + p.key(), p.value());
    }
  };
  collect("generator", *trainer.generator());
  collect("discriminator", *trainer.discriminator());
  collect("heads", *trainer.heads());

  std::vector<torch::Tensor> selected;
  for (const auto& [name, tensor] : named) {
    if (name.rfind(component, 0) == 0) {
      selected.push_back(tensor.detach().flatten().to(torch::kDouble));
    }
  }
  if (selected.empty()) {
    throw ConfigError(fmt::format("unknown checkpoint component '{}'", component));
  }
  auto weights = torch::cat(selected);
  if (weights.numel() == 0) {
    throw ConfigError(fmt::format("component '{}' has no weights", component));
  }

  DensityPlotData data;
  data.n_weights = weights.numel();
  data.mean = weights.mean().item<double>();
  data.stddev = weights.numel() > 1 ? weights.std().item<double>() : 0.0;

  const double lo = weights.min().item<double>();
  const double hi = weights.max().item<double>();
  const double span = std::max(hi - lo, 1e-12);
  auto hist = torch::histc(weights, bins, lo, hi);
  const double bin_width = span / bins;
  auto densities = hist / (static_cast<double>(data.n_weights) * bin_width);
  for (int i = 0; i < bins; ++i) {
    data.bin_centers.push_back(lo + (i + 0.5) * bin_width);
    data.densities.push_back(densities[i].item<double>());
  }

  if (!csv_out.empty()) {
    if (!csv_out.parent_path().empty()) fs::create_directories(csv_out.parent_path());
    std::ofstream csv(csv_out);
    csv << "bin_center,density\n";
    for (int i = 0; i < bins; ++i) {
      csv << data.bin_centers[i] << "," << data.densities[i] << "\n";
    }
  }
  if (!png_out.empty()) {
    const int w = 512, h = 256;
    cv::Mat plot(h, w, CV_8UC1, cv::Scalar(255));
    const double peak = *std::max_element(data.densities.begin(), data.densities.end());
    for (int i = 0; i < bins; ++i) {
      int x0 = i * w / bins;
      int x1 = (i + 1) * w / bins - 1;
      int bar = peak > 0 ? static_cast<int>(data.densities[i] / peak * (h - 10)) : 0;
      cv::rectangle(plot, {x0, h - 1 - bar}, {x1, h - 1}, cv::Scalar(60), cv::FILLED);
    }
    if (!png_out.parent_path().empty()) fs::create_directories(png_out.parent_path());
    cv::imwrite(png_out.string(), plot);
  }
  return data;
}

double edge_map_l1(const ImageBatch& a, const ImageBatch& b) {
  if (a.sizes() != b.sizes()) {
    throw DimensionError("edge_map_l1: shape mismatch");
  }
  auto sobel = [](const torch::Tensor& img) {
    auto gray = img.mean(1, /*keepdim=*/true);
    auto kx = torch::tensor({{-1.f, 0.f, 1.f}, {-2.f, 0.f, 2.f}, {-1.f, 0.f, 1.f}})
                  .view({1, 1, 3, 3});
    auto ky = kx.transpose(2, 3);
    auto gx = torch::conv2d(gray, kx, {}, 1, 1);
    auto gy = torch::conv2d(gray, ky, {}, 1, 1);
    return (gx.pow(2) + gy.pow(2) + 1e-12).sqrt();
  };
  torch::NoGradGuard no_grad;
  return (sobel(a) - sobel(b)).abs().mean().item<double>();
}

}  // namespace stagematch
