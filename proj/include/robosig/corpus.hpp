#pragma once

// Image corpora: a seeded synthetic "coloured shapes" generator and a loader
// for directories of PNG/JPEG files. The loader needs OpenCV (imgcodecs,
// imgproc); define ROBOSIG_NO_OPENCV to drop it.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "robosig/imaging.hpp"

#ifndef ROBOSIG_NO_OPENCV
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#endif

namespace robosig {

// Seed offset separating held-out synthetic images from training ones.
inline constexpr std::uint64_t kEvalSeedOffset = 1'000'000;

namespace detail {

inline double smoothstep_edge(double signed_distance, double softness) {
  return std::clamp(0.5 - signed_distance / softness, 0.0, 1.0);
}

}  // namespace detail

// One synthetic image: a two-colour linear gradient with 2-4 soft-edged
// circles and rectangles. Written into `dst` as (3, size, size).
template <typename T>
void synthetic_image(std::size_t size, std::uint64_t seed, std::span<T> dst) {
  require(dst.size() == kImageChannels * size * size, "synthetic_image buffer size");
  std::mt19937_64 rng(derive_seed(seed, 0xC0FFEE));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto colour = [&] { return std::array<double, 3>{unit(rng), unit(rng), unit(rng)}; };

  const auto c0 = colour();
  const auto c1 = colour();
  const double angle = unit(rng) * 2.0 * std::numbers::pi;
  const double gx = std::cos(angle), gy = std::sin(angle);
  const double s = static_cast<double>(size);
  const std::size_t plane = size * size;

  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double u = ((x / s - 0.5) * gx + (y / s - 0.5) * gy) / std::sqrt(2.0) + 0.5;
      for (std::size_t c = 0; c < 3; ++c)
        dst[c * plane + y * size + x] = static_cast<T>(c0[c] * (1 - u) + c1[c] * u);
    }

  const int shapes = 2 + static_cast<int>(rng() % 3);
  for (int k = 0; k < shapes; ++k) {
    const auto col = colour();
    const bool circle = (rng() & 1u) != 0;
    const double cx = unit(rng) * s, cy = unit(rng) * s;
    const double r = (0.12 + 0.18 * unit(rng)) * s;
    const double aspect = 0.6 + 0.8 * unit(rng);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double d = circle ? std::hypot(dx, dy) - r
                                : std::max(std::abs(dx) - r * aspect, std::abs(dy) - r / aspect);
        const double a = detail::smoothstep_edge(d, 2.0);
        if (a <= 0) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          T& p = dst[c * plane + y * size + x];
          p = static_cast<T>(p * (1 - a) + col[c] * a);
        }
      }
  }
}

// `count` synthetic images with seeds first_seed, first_seed + 1, ...
template <typename T>
ImageBatch<T> synthetic_corpus(std::size_t count, std::size_t size, std::uint64_t first_seed) {
  ImageBatch<T> batch({count, kImageChannels, size, size});
  for (std::size_t i = 0; i < count; ++i) synthetic_image<T>(size, first_seed + i, batch.item(i));
  return batch;
}

inline std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

#ifndef ROBOSIG_NO_OPENCV
// Loads files [first, first + count) of the sorted listing, centre-cropped to
// a square and resized to size x size.
template <typename T>
ImageBatch<T> load_image_directory(const std::filesystem::path& dir, std::size_t size,
                                   std::size_t first = 0,
                                   std::size_t count = static_cast<std::size_t>(-1)) {
  const auto files = list_image_files(dir);
  if (first >= files.size()) throw IoError("corpus has no images in the requested range: " + dir.string());
  count = std::min(count, files.size() - first);
  ImageBatch<T> batch({count, kImageChannels, size, size});
  for (std::size_t i = 0; i < count; ++i) {
    const auto& file = files[first + i];
    cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw IoError("failed to decode image: " + file.string());
    const int side = std::min(bgr.rows, bgr.cols);
    cv::Mat square = bgr(cv::Rect((bgr.cols - side) / 2, (bgr.rows - side) / 2, side, side));
    cv::Mat resized;
    cv::resize(square, resized, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0,
               side > static_cast<int>(size) ? cv::INTER_AREA : cv::INTER_LINEAR);
    auto dst = batch.item(i);
    const std::size_t plane = size * size;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const auto px = resized.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
        for (std::size_t c = 0; c < 3; ++c)
          dst[c * plane + y * size + x] = static_cast<T>(px[2 - c] / 255.0);
      }
  }
  return batch;
}
#endif

}  // namespace robosig
