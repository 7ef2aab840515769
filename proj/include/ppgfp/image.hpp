#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ppgfp/tensor.hpp"

namespace ppgfp::image {

inline constexpr std::size_t kFingerprintSize = 64;

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool operator==(const GrayImage&) const = default;
};

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved R, G, B
};

GrayImage to_grayscale(const RgbImage& img);

/// Contrast-limited adaptive histogram equalization over a tiles x tiles
/// grid. Per-tile clip limit is clip * tile_area / 256; flat tiles map to
/// themselves; pixel values interpolate bilinearly between tile centers.
GrayImage clahe(const GrayImage& img, double clip = 2.0, std::size_t tiles = 8);

/// Sobel gradient magnitude of the 5x5 Gaussian-smoothed (sigma 1.4) image.
std::vector<double> smoothed_gradient_magnitude(const GrayImage& img);

/// Binary edge map (pixels 0 or 1).
GrayImage canny(const GrayImage& img, double lo, double hi);

struct CannyThresholds {
  double lo;
  double hi;
};
/// hi = 0.7 * 99th percentile of the gradient magnitude, lo = 0.4 * hi.
CannyThresholds auto_thresholds(const GrayImage& img);

/// Fractional area-average resampling of a row-major w x h image.
std::vector<double> area_downsample(std::span<const double> img, std::size_t w, std::size_t h, std::size_t out_w,
                                    std::size_t out_h);

/// Centered square crop side and offsets.
struct Crop {
  std::size_t x0, y0, side;
};
Crop center_square(std::size_t w, std::size_t h);

struct FingerprintConfig {
  double clahe_clip = 2.0;
  std::size_t clahe_tiles = 8;
  double canny_lo = -1.0;  // negative selects automatic thresholds
  double canny_hi = -1.0;
  std::size_t frame_stride = 1;
  void validate() const;
};

/// CLAHE -> Canny on frames begin, begin+stride, ... <= end; pixel-wise mean,
/// center square crop, area downsample to 64x64, divided by its maximum.
Tensor beat_synchronized_fingerprint(std::span<const GrayImage> frames, std::size_t begin, std::size_t end,
                                     const FingerprintConfig& cfg = {});

/// Number of beat_synchronized_fingerprint calls in this process.
std::size_t pipeline_invocations();

/// Row-major: (r, c) -> 64 r + c.
std::vector<double> flatten(const Tensor& fp);
Tensor unflatten(std::span<const double> pixels);

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace ppgfp::image
