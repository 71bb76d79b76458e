#include "stagematch/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace stagematch {

namespace fs = std::filesystem;

namespace {

bool has_image_extension(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

cv::Mat read_bgr(const fs::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) {
    throw DataError(fmt::format("undecodable image file: {}", path.string()));
  }
  return img;
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw DataError(fmt::format("not a directory: {}", dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw DataError(fmt::format("no images found in {}", dir.string()));
  }
  return files;
}

ImageBatch load_image(const fs::path& path, int size) {
  cv::Mat img = read_bgr(path);
  if (img.rows != size || img.cols != size) {
    cv::resize(img, img, cv::Size(size, size), 0, 0, cv::INTER_CUBIC);
  }
  cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  img.convertTo(img, CV_32FC3, 2.0 / 255.0, -1.0);
  auto tensor = torch::from_blob(img.data, {size, size, 3}, torch::kFloat)
                    .permute({2, 0, 1})
                    .clone()
                    .unsqueeze(0);
  return tensor;
}

void save_image(const torch::Tensor& image, const fs::path& path) {
  torch::Tensor t = image;
  if (t.dim() == 4) {
    if (t.size(0) != 1) {
      throw DimensionError("save_image: expected a single image");
    }
    t = t.squeeze(0);
  }
  if (t.dim() != 3 || t.size(0) != 3) {
    throw DimensionError("save_image: expected a (3, h, w) tensor");
  }
  t = ((t.detach().cpu().to(torch::kFloat).clamp(-1, 1) + 1.0) * 127.5)
          .round()
          .clamp(0, 255)
          .to(torch::kUInt8)
          .permute({1, 2, 0})
          .contiguous();
  cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3,
              t.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!path.parent_path().empty()) {
    fs::create_directories(path.parent_path());
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw DataError(fmt::format("failed to write {}", path.string()));
  }
}

UnpairedDataset::UnpairedDataset(UnpairedDatasetSpec spec) : spec_(std::move(spec)) {
  files_a_ = list_images(spec_.domain_a_dir);
  files_b_ = list_images(spec_.domain_b_dir);
}

namespace {

std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch, uint64_t salt) {
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(epoch) * 2654435761ULL + salt);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

UnpairedDataset::Sample UnpairedDataset::get(int64_t epoch, int64_t index) const {
  if (index < 0 || index >= epoch_length()) {
    throw DataError(fmt::format("sample index {} out of range", index));
  }
  auto order_a = epoch_order(epoch_length(), spec_.shuffle_seed, epoch, 1);
  auto order_b = epoch_order(domain_b_size(), spec_.shuffle_seed, epoch, 2);
  const auto& pa = files_a_[order_a[index]];
  const auto& pb = files_b_[order_b[index % domain_b_size()]];
  auto a = load_image(pa, spec_.image_size);
  auto b = load_image(pb, spec_.image_size);
  if (spec_.horizontal_flip) {
    std::mt19937_64 rng(spec_.shuffle_seed ^ (static_cast<uint64_t>(epoch) << 20) ^
                        static_cast<uint64_t>(index));
    std::bernoulli_distribution flip(0.5);
    if (flip(rng)) a = a.flip(3);
    if (flip(rng)) b = b.flip(3);
  }
  return {a, b, pa, pb};
}

namespace {

cv::Scalar hsv_color(double hue_deg, double saturation, double value) {
  cv::Mat hsv(1, 1, CV_8UC3,
              cv::Scalar(hue_deg / 2.0, saturation * 255.0, value * 255.0));
  cv::Mat bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  auto px = bgr.at<cv::Vec3b>(0, 0);
  return {static_cast<double>(px[0]), static_cast<double>(px[1]),
          static_cast<double>(px[2])};
}

void draw_shape(cv::Mat& canvas, int shape, cv::Point center, int radius,
                const cv::Scalar& color) {
  switch (shape) {
    case 0:
      cv::circle(canvas, center, radius, color, cv::FILLED, cv::LINE_AA);
      break;
    case 1:
      cv::rectangle(canvas, center - cv::Point(radius, radius),
                    center + cv::Point(radius, radius), color, cv::FILLED);
      break;
    default: {
      std::vector<cv::Point> pts{{center.x, center.y - radius},
                                 {center.x - radius, center.y + radius},
                                 {center.x + radius, center.y + radius}};
      cv::fillConvexPoly(canvas, pts, color, cv::LINE_AA);
      break;
    }
  }
}

void synth_domain(const ToyDomainSpec& spec, const fs::path& dir, double hue_offset,
                  uint64_t salt) {
  fs::create_directories(dir);
  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + salt);
  std::uniform_real_distribution<double> hue(spec.palette_hue_min_deg,
                                             spec.palette_hue_max_deg);
  std::uniform_int_distribution<int> shape(0, 2);
  std::uniform_int_distribution<int> count(1, 3);
  const int s = spec.size;
  std::uniform_int_distribution<int> pos(s / 6, s - s / 6);
  std::uniform_int_distribution<int> radius(s / 8, s / 4);

  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int i = 0; i < spec.n_images; ++i) {
    // Dense hue field: a smooth palette-hued gradient with per-image random
    // direction and phase, so the domain cue covers every pixel instead of a
    // few shapes on a neutral background.
    const double phase = unit(rng);
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double gx = std::cos(angle) / s, gy = std::sin(angle) / s;
    const double span = spec.palette_hue_max_deg - spec.palette_hue_min_deg;
    cv::Mat hsv(s, s, CV_8UC3);
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        double t = c * gx + r * gy + phase;
        t -= std::floor(t);
        const double tri = t < 0.5 ? 2.0 * t : 2.0 * (1.0 - t);
        const double h = std::fmod(
            spec.palette_hue_min_deg + tri * span + hue_offset + 360.0, 360.0);
        hsv.at<cv::Vec3b>(r, c) = {static_cast<unsigned char>(h / 2.0),
                                   static_cast<unsigned char>(0.75 * 255.0),
                                   static_cast<unsigned char>(0.55 * 255.0)};
      }
    }
    cv::Mat canvas;
    cv::cvtColor(hsv, canvas, cv::COLOR_HSV2BGR);
    const int n_shapes = count(rng);
    for (int j = 0; j < n_shapes; ++j) {
      double h = std::fmod(hue(rng) + hue_offset + 360.0, 360.0);
      draw_shape(canvas, shape(rng), {pos(rng), pos(rng)}, radius(rng),
                 hsv_color(h, 0.9, 0.9));
    }
    cv::imwrite((dir / fmt::format("img_{:04d}.png", i)).string(), canvas);
  }
}

}  // namespace

void synth_toy(const ToyDomainSpec& spec, const fs::path& root) {
  fs::create_directories(root);
  synth_domain(spec, root / "trainA", 0.0, 11);
  synth_domain(spec, root / "trainB", spec.hue_rotation_deg, 22);

  nlohmann::json manifest{{"size", spec.size},
                          {"n_images", spec.n_images},
                          {"hue_rotation_deg", spec.hue_rotation_deg},
                          {"palette_hue_min_deg", spec.palette_hue_min_deg},
                          {"palette_hue_max_deg", spec.palette_hue_max_deg},
                          {"seed", spec.seed},
                          {"layout", {"trainA", "trainB"}}};
  std::ofstream out(root / "manifest.json");
  if (!out) {
    throw DataError(fmt::format("cannot write manifest under {}", root.string()));
  }
  out << manifest.dump(2) << "\n";
}

double mean_hue_deg(const fs::path& dir) {
  double sin_sum = 0.0, cos_sum = 0.0;
  int64_t count = 0;
  for (const auto& file : list_images(dir)) {
    cv::Mat img = read_bgr(file);
    cv::Mat hsv;
    cv::cvtColor(img, hsv, cv::COLOR_BGR2HSV);
    for (int r = 0; r < hsv.rows; ++r) {
      for (int c = 0; c < hsv.cols; ++c) {
        auto px = hsv.at<cv::Vec3b>(r, c);
        if (px[1] > 64 && px[2] > 64) {  // saturated foreground only
          const double rad = px[0] * 2.0 * std::numbers::pi / 180.0;
          sin_sum += std::sin(rad);
          cos_sum += std::cos(rad);
          ++count;
        }
      }
    }
  }
  if (count == 0) {
    throw DataError(fmt::format("no saturated pixels found in {}", dir.string()));
  }
  double deg = std::atan2(sin_sum, cos_sum) * 180.0 / std::numbers::pi;
  return deg < 0 ? deg + 360.0 : deg;
}

}  // namespace stagematch
