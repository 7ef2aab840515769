#include "ppgfp/image.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"

namespace ppgfp::image {

namespace {

std::atomic<std::size_t> g_invocations{0};

}  // namespace

GrayImage to_grayscale(const RgbImage& img) {
  if (img.rgb.size() != 3 * img.width * img.height) fail(ErrorKind::Input, "to_grayscale: expected 3 channels");
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double y = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] + 0.114 * img.rgb[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
  }
  return out;
}

GrayImage clahe(const GrayImage& img, double clip, std::size_t tiles) {
  if (tiles == 0 || img.width < tiles || img.height < tiles) fail(ErrorKind::Input, "clahe: image smaller than tile grid");
  if (!(clip > 0.0)) fail(ErrorKind::Config, "clahe: clip must be positive");
  const auto W = img.width, H = img.height;
  auto x_edge = [&](std::size_t i) { return i * W / tiles; };
  auto y_edge = [&](std::size_t j) { return j * H / tiles; };

  std::vector<std::array<std::uint8_t, 256>> luts(tiles * tiles);
  for (std::size_t ty = 0; ty < tiles; ++ty) {
    for (std::size_t tx = 0; tx < tiles; ++tx) {
      std::array<std::uint32_t, 256> hist{};
      std::uint8_t lo = 255, hi = 0;
      for (std::size_t y = y_edge(ty); y < y_edge(ty + 1); ++y)
        for (std::size_t x = x_edge(tx); x < x_edge(tx + 1); ++x) {
          const auto v = img.at(y, x);
          ++hist[v];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      auto& lut = luts[ty * tiles + tx];
      if (lo == hi) {
        for (std::size_t v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
        continue;
      }
      const std::size_t area = (y_edge(ty + 1) - y_edge(ty)) * (x_edge(tx + 1) - x_edge(tx));
      const auto limit = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(clip * static_cast<double>(area) / 256.0));
      std::uint32_t excess = 0;
      for (auto& h : hist) {
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      }
      const std::uint32_t bonus = excess / 256;
      std::uint32_t residual = excess - bonus * 256;
      for (auto& h : hist) h += bonus;
      if (residual > 0) {
        const std::size_t step = std::max<std::size_t>(1, 256 / residual);
        for (std::size_t v = 0; v < 256 && residual > 0; v += step, --residual) ++hist[v];
      }
      const double scale = 255.0 / static_cast<double>(area);
      std::uint32_t cdf = 0;
      for (std::size_t v = 0; v < 256; ++v) {
        cdf += hist[v];
        lut[v] = static_cast<std::uint8_t>(std::clamp(std::lround(cdf * scale), 0L, 255L));
      }
    }
  }

  // Bilinear blend of the four surrounding tile mappings, measured between tile centers.
  GrayImage out(W, H);
  const double tw = static_cast<double>(W) / static_cast<double>(tiles);
  const double th = static_cast<double>(H) / static_cast<double>(tiles);
  for (std::size_t y = 0; y < H; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) / th - 0.5;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(fy));
    const double wy = fy - static_cast<double>(y0);
    const auto ya = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y0, 0, static_cast<std::ptrdiff_t>(tiles) - 1));
    const auto yb = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y0 + 1, 0, static_cast<std::ptrdiff_t>(tiles) - 1));
    for (std::size_t x = 0; x < W; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / tw - 0.5;
      const auto x0 = static_cast<std::ptrdiff_t>(std::floor(fx));
      const double wx = fx - static_cast<double>(x0);
      const auto xa = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x0, 0, static_cast<std::ptrdiff_t>(tiles) - 1));
      const auto xb =
          static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x0 + 1, 0, static_cast<std::ptrdiff_t>(tiles) - 1));
      const auto v = img.at(y, x);
      const double top = (1.0 - wx) * luts[ya * tiles + xa][v] + wx * luts[ya * tiles + xb][v];
      const double bot = (1.0 - wx) * luts[yb * tiles + xa][v] + wx * luts[yb * tiles + xb][v];
      out.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround((1.0 - wy) * top + wy * bot), 0L, 255L));
    }
  }
  return out;
}

namespace {

struct Gradients {
  std::vector<double> mag;
  std::vector<double> gx;
  std::vector<double> gy;
};

Gradients sobel_of_smoothed(const GrayImage& img) {
  const auto W = img.width, H = img.height;
  std::array<double, 5> k{};
  double ks = 0.0;
  for (int i = -2; i <= 2; ++i) {
    k[static_cast<std::size_t>(i + 2)] = std::exp(-static_cast<double>(i * i) / (2.0 * 1.4 * 1.4));
    ks += k[static_cast<std::size_t>(i + 2)];
  }
  for (auto& v : k) v /= ks;
  auto clampi = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  // Separable Gaussian with replicated borders.
  std::vector<double> tmp(W * H), sm(W * H);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[static_cast<std::size_t>(i + 2)] * img.at(y, clampi(static_cast<std::ptrdiff_t>(x) + i, W));
      tmp[y * W + x] = s;
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[static_cast<std::size_t>(i + 2)] * tmp[clampi(static_cast<std::ptrdiff_t>(y) + i, H) * W + x];
      sm[y * W + x] = s;
    }
  Gradients g{std::vector<double>(W * H), std::vector<double>(W * H), std::vector<double>(W * H)};
  auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) { return sm[clampi(y, H) * W + clampi(x, W)]; };
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const auto yy = static_cast<std::ptrdiff_t>(y), xx = static_cast<std::ptrdiff_t>(x);
      const double gx = (at(yy - 1, xx + 1) + 2.0 * at(yy, xx + 1) + at(yy + 1, xx + 1)) -
                        (at(yy - 1, xx - 1) + 2.0 * at(yy, xx - 1) + at(yy + 1, xx - 1));
      const double gy = (at(yy + 1, xx - 1) + 2.0 * at(yy + 1, xx) + at(yy + 1, xx + 1)) -
                        (at(yy - 1, xx - 1) + 2.0 * at(yy - 1, xx) + at(yy - 1, xx + 1));
      g.gx[y * W + x] = gx;
      g.gy[y * W + x] = gy;
      g.mag[y * W + x] = std::hypot(gx, gy);
    }
  return g;
}

}  // namespace

std::vector<double> smoothed_gradient_magnitude(const GrayImage& img) { return sobel_of_smoothed(img).mag; }

CannyThresholds auto_thresholds(const GrayImage& img) {
  auto mag = smoothed_gradient_magnitude(img);
  const auto k = static_cast<std::size_t>(std::floor(0.99 * static_cast<double>(mag.size() - 1)));
  std::nth_element(mag.begin(), mag.begin() + static_cast<std::ptrdiff_t>(k), mag.end());
  const double hi = 0.7 * mag[k];
  return {0.4 * hi, hi};
}

GrayImage canny(const GrayImage& img, double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi)) fail(ErrorKind::Config, "canny: thresholds must satisfy 0 <= lo < hi");
  const auto W = img.width, H = img.height;
  const auto g = sobel_of_smoothed(img);
  GrayImage out(W, H);
  if (W < 3 || H < 3) return out;

  // Non-maximum suppression along the quantized gradient direction.
  std::vector<std::uint8_t> cls(W * H, 0);  // 0 none, 1 weak, 2 strong
  for (std::size_t y = 1; y + 1 < H; ++y)
    for (std::size_t x = 1; x + 1 < W; ++x) {
      const std::size_t i = y * W + x;
      const double m = g.mag[i];
      if (m < lo || m == 0.0) continue;
      double ang = std::atan2(g.gy[i], g.gx[i]) * 180.0 / std::numbers::pi;
      if (ang < 0.0) ang += 180.0;
      std::size_t a, b;
      if (ang < 22.5 || ang >= 157.5) {
        a = i - 1, b = i + 1;
      } else if (ang < 67.5) {
        a = i - W - 1, b = i + W + 1;
      } else if (ang < 112.5) {
        a = i - W, b = i + W;
      } else {
        a = i - W + 1, b = i + W - 1;
      }
      if (!(m > g.mag[a] && m >= g.mag[b])) continue;
      cls[i] = m >= hi ? 2 : 1;
    }

  // Hysteresis: weak pixels survive when 8-connected to a strong one.
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < cls.size(); ++i)
    if (cls[i] == 2) {
      out.pixels[i] = 1;
      stack.push_back(i);
    }
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    const auto y = i / W, x = i % W;
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
      for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
        const auto ny = static_cast<std::ptrdiff_t>(y) + dy, nx = static_cast<std::ptrdiff_t>(x) + dx;
        if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(H) || nx >= static_cast<std::ptrdiff_t>(W)) continue;
        const auto j = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
        if (cls[j] == 1 && out.pixels[j] == 0) {
          out.pixels[j] = 1;
          stack.push_back(j);
        }
      }
  }
  return out;
}

std::vector<double> area_downsample(std::span<const double> img, std::size_t w, std::size_t h, std::size_t out_w,
                                    std::size_t out_h) {
  if (img.size() != w * h || out_w == 0 || out_h == 0) fail(ErrorKind::Dimension, "area_downsample: bad extents");
  // Weight of source cell k inside destination cell j along one axis.
  auto weights = [](std::size_t n_in, std::size_t n_out) {
    std::vector<std::vector<std::pair<std::size_t, double>>> wts(n_out);
    const double r = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      const double a = static_cast<double>(j) * r, b = static_cast<double>(j + 1) * r;
      for (auto k = static_cast<std::size_t>(std::floor(a)); k < n_in && static_cast<double>(k) < b; ++k) {
        const double ov = std::min(b, static_cast<double>(k + 1)) - std::max(a, static_cast<double>(k));
        if (ov > 0.0) wts[j].push_back({k, ov / r});
      }
    }
    return wts;
  };
  const auto wx = weights(w, out_w), wy = weights(h, out_h);
  std::vector<double> rows(w * out_h, 0.0);
  for (std::size_t j = 0; j < out_h; ++j)
    for (auto [k, wk] : wy[j])
      for (std::size_t x = 0; x < w; ++x) rows[j * w + x] += wk * img[k * w + x];
  std::vector<double> out(out_w * out_h, 0.0);
  for (std::size_t j = 0; j < out_h; ++j)
    for (std::size_t i = 0; i < out_w; ++i)
      for (auto [k, wk] : wx[i]) out[j * out_w + i] += wk * rows[j * w + k];
  return out;
}

Crop center_square(std::size_t w, std::size_t h) {
  const auto side = std::min(w, h);
  return {(w - side) / 2, (h - side) / 2, side};
}

void FingerprintConfig::validate() const {
  if (!(clahe_clip > 0.0)) fail(ErrorKind::Config, "image.clahe_clip must be positive");
  if (clahe_tiles == 0) fail(ErrorKind::Config, "image.clahe_tiles must be positive");
  if (frame_stride == 0) fail(ErrorKind::Config, "image.frame_stride must be positive");
  const bool auto_lo = canny_lo < 0.0, auto_hi = canny_hi < 0.0;
  if (auto_lo != auto_hi) fail(ErrorKind::Config, "image.canny_lo and image.canny_hi must both be set or both automatic");
  if (!auto_lo && !(canny_lo < canny_hi)) fail(ErrorKind::Config, "image.canny_lo must be below image.canny_hi");
}

Tensor beat_synchronized_fingerprint(std::span<const GrayImage> frames, std::size_t begin, std::size_t end,
                                     const FingerprintConfig& cfg) {
  cfg.validate();
  if (begin > end || end >= frames.size()) fail(ErrorKind::Input, "fingerprint: empty or out-of-range beat span");
  ++g_invocations;
  const auto W = frames[begin].width, H = frames[begin].height;
  std::vector<double> acc(W * H, 0.0);
  std::size_t used = 0;
  for (std::size_t f = begin; f <= end; f += cfg.frame_stride) {
    const auto& fr = frames[f];
    if (fr.width != W || fr.height != H) fail(ErrorKind::Input, "fingerprint: frames differ in size");
    const auto eq = clahe(fr, cfg.clahe_clip, cfg.clahe_tiles);
    CannyThresholds th{cfg.canny_lo, cfg.canny_hi};
    if (cfg.canny_lo < 0.0) th = auto_thresholds(eq);
    GrayImage edges(W, H);
    if (th.hi > 0.0) edges = canny(eq, th.lo, th.hi);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += edges.pixels[i];
    ++used;
  }
  for (auto& v : acc) v /= static_cast<double>(used);

  const auto crop = center_square(W, H);
  std::vector<double> sq(crop.side * crop.side);
  for (std::size_t y = 0; y < crop.side; ++y)
    for (std::size_t x = 0; x < crop.side; ++x) sq[y * crop.side + x] = acc[(y + crop.y0) * W + x + crop.x0];
  auto ds = area_downsample(sq, crop.side, crop.side, kFingerprintSize, kFingerprintSize);
  const double mx = *std::max_element(ds.begin(), ds.end());
  for (auto& v : ds) v = mx > 0.0 ? std::clamp(v / mx, 0.0, 1.0) : 0.0;
  return Tensor({kFingerprintSize, kFingerprintSize}, std::move(ds));
}

std::size_t pipeline_invocations() { return g_invocations.load(); }

std::vector<double> flatten(const Tensor& fp) {
  if (fp.shape() != Shape{kFingerprintSize, kFingerprintSize}) fail(ErrorKind::Dimension, "flatten: expected 64x64");
  return {fp.data().begin(), fp.data().end()};
}

Tensor unflatten(std::span<const double> pixels) {
  if (pixels.size() != kFingerprintSize * kFingerprintSize) fail(ErrorKind::Dimension, "unflatten: expected 4096 values");
  return Tensor({kFingerprintSize, kFingerprintSize}, std::vector<double>(pixels.begin(), pixels.end()));
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::string data = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  data.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  write_file_atomic(path, data);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic;
  auto skip_comments = [&in] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  if (magic != "P5" || !in || w == 0 || h == 0 || maxval != 255) {
    fail(ErrorKind::Data, "read_pgm: " + path.string() + " is not an 8-bit binary PGM");
  }
  in.get();
  const auto off = static_cast<std::size_t>(in.tellg());
  if (bytes.size() < off + w * h) fail(ErrorKind::Data, "read_pgm: " + path.string() + " is truncated");
  GrayImage img(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(off), w * h, img.pixels.begin());
  return img;
}

}  // namespace ppgfp::image
