#include "ppgfp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"
#include "ppgfp/rng.hpp"

namespace ppgfp::synth {

namespace {

double gauss(double p, double mu, double w) {
  const double z = (p - mu) / w;
  return std::exp(-0.5 * z * z);
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double cycle_value(const PpgProfile& p, double phase) {
  return gauss(phase, p.sys_pos, p.sys_width) + p.dic_ratio * gauss(phase, p.dic_pos, p.dic_width) +
         p.runoff * (1.0 - phase) * smoothstep(phase / p.sys_pos);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void SubjectProfile::validate() const {
  if (!(ppg.bpm >= 40.0 && ppg.bpm <= 180.0)) fail(ErrorKind::Config, "profile: heart rate outside 40-180 bpm");
  if (!(ridge.period >= 4.0 && ridge.period <= 16.0)) fail(ErrorKind::Config, "profile: ridge period outside 4-16 px");
  if (!(ppg.sys_pos > 0.0 && ppg.sys_pos < ppg.dic_pos && ppg.dic_pos < 1.0)) {
    fail(ErrorKind::Config, "profile: systolic peak must precede the dicrotic wave inside the cycle");
  }
  if (!(ppg.sys_width > 0.0 && ppg.dic_width > 0.0 && ppg.noise >= 0.0)) fail(ErrorKind::Config, "profile: bad widths");
}

SubjectProfile make_profile(std::size_t subject, double separability, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(0x5eedULL + subject)));
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = separability;
  SubjectProfile p;
  p.seed = seed;
  auto& g = p.ppg;
  g.bpm = std::clamp(72.0 + 10.0 * s * n(rng), 50.0, 110.0);
  g.sys_pos = std::clamp(0.28 + 0.03 * s * n(rng), 0.22, 0.34);
  g.sys_width = std::clamp(0.075 + 0.015 * s * n(rng), 0.045, 0.11);
  g.dic_pos = std::clamp(g.sys_pos + 0.24 + 0.04 * s * n(rng), g.sys_pos + 0.16, g.sys_pos + 0.32);
  g.dic_width = std::clamp(0.11 + 0.025 * s * n(rng), 0.06, 0.16);
  g.dic_ratio = std::clamp(0.45 + 0.15 * s * n(rng), 0.1, 0.85);
  g.runoff = std::clamp(0.5 + 0.12 * s * n(rng), 0.25, 0.75);

  auto& r = p.ridge;
  r.period = std::clamp(8.0 + 1.5 * s * n(rng), 5.0, 12.0);
  r.orientation = 0.9 * s * n(rng);
  r.curvature = std::clamp(0.4 * s * n(rng), -0.8, 0.8);
  r.phase = 2.0 * std::numbers::pi * u(rng);
  p.validate();
  return p;
}

SubjectProfile session_profile(const SubjectProfile& base, std::size_t session, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(0xa11ceULL + session)));
  std::normal_distribution<double> n(0.0, 1.0);
  SubjectProfile p = base;
  p.ppg.bpm = std::clamp(base.ppg.bpm * (1.0 + 0.05 * n(rng)), 45.0, 170.0);
  p.ridge.shift_x = 1.5 * n(rng);
  p.ridge.shift_y = 1.5 * n(rng);
  p.ridge.orientation = base.ridge.orientation + 0.03 * n(rng);
  p.ridge.illum_x = 0.15 * n(rng);
  p.ridge.illum_y = 0.15 * n(rng);
  return p;
}

BeatTrain gen_beat_train(const PpgProfile& profile, double duration_s, double fs, std::uint64_t seed) {
  if (!(duration_s >= 3.0)) fail(ErrorKind::Config, "gen_beat_train: duration must be at least 3 s");
  if (!(fs > 0.0)) fail(ErrorKind::Config, "gen_beat_train: sampling rate must be positive");
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const auto total = static_cast<std::size_t>(std::lround(duration_s * fs));
  const double nominal = fs * 60.0 / profile.bpm;
  BeatTrain out;
  out.clean.assign(total, 0.0);

  // Cycles start before t = 0 so the recording begins mid-beat.
  double start = -u(rng) * nominal;
  std::vector<std::pair<double, double>> cycles;  // (start, length)
  while (start < static_cast<double>(total)) {
    const double len = nominal * (1.0 + jitter(rng));
    cycles.emplace_back(start, len);
    PpgProfile c = profile;
    const double j = profile.shape_jitter;
    c.sys_pos = std::clamp(c.sys_pos + j * n(rng), 0.15, 0.4);
    c.dic_pos = std::clamp(c.dic_pos + j * n(rng), c.sys_pos + 0.12, 0.8);
    c.dic_ratio = std::max(0.0, c.dic_ratio + 2.0 * j * n(rng));
    const double amp = 1.0 + 2.0 * j * n(rng);
    const auto t0 = static_cast<std::ptrdiff_t>(std::ceil(start));
    for (auto t = std::max<std::ptrdiff_t>(t0, 0); static_cast<double>(t) < start + len && t < static_cast<std::ptrdiff_t>(total);
         ++t) {
      out.clean[static_cast<std::size_t>(t)] = amp * cycle_value(c, (static_cast<double>(t) - start) / len);
    }
    start += len;
  }
  // Each interior boundary's valley is the clean minimum near the nominal boundary.
  for (std::size_t k = 1; k < cycles.size(); ++k) {
    const double b = cycles[k].first;
    const double reach = 0.15 * cycles[k].second;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(b - reach));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(b + reach));
    if (lo < 1 || hi >= static_cast<std::ptrdiff_t>(total) - 1) continue;
    auto best = lo;
    for (auto t = lo; t <= hi; ++t)
      if (out.clean[static_cast<std::size_t>(t)] < out.clean[static_cast<std::size_t>(best)]) best = t;
    out.valleys.push_back(static_cast<std::size_t>(best));
  }

  const double drift_f = 0.1 + 0.15 * u(rng), drift_ph = 2.0 * std::numbers::pi * u(rng);
  out.signal.fs = fs;
  out.signal.samples.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    const double drift = profile.drift * std::sin(2.0 * std::numbers::pi * drift_f * static_cast<double>(t) / fs + drift_ph);
    out.signal.samples[t] = out.clean[t] + drift + profile.noise * n(rng);
  }
  return out;
}

RidgeImage gen_ridge_image(const RidgeProfile& p, std::size_t size) {
  if (size < 32) fail(ErrorKind::Config, "gen_ridge_image: size must be at least 32");
  const double S = static_cast<double>(size);
  const double c = (S - 1.0) / 2.0;
  const double co = std::cos(p.orientation), si = std::sin(p.orientation);
  RidgeImage out;
  out.image = image::GrayImage(size, size);
  out.edges = image::GrayImage(size, size);
  out.intensity.resize(size * size);
  std::vector<double> cosv(size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - c - p.shift_x, dy = static_cast<double>(y) - c - p.shift_y;
      const double a = dx * co + dy * si, b = -dx * si + dy * co;
      const double phi = 2.0 * std::numbers::pi / p.period * (a + p.curvature * (a * a - b * b) / (2.0 * S)) + p.phase;
      const double illum = 1.0 + p.illum_x * (static_cast<double>(x) / S - 0.5) + p.illum_y * (static_cast<double>(y) / S - 0.5);
      const double cv = std::cos(phi);
      cosv[y * size + x] = cv;
      const double v = p.base + p.amplitude * illum * cv;
      out.intensity[y * size + x] = v;
      out.image.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  if (p.amplitude != 0.0) {
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double v = cosv[y * size + x];
        const bool right = x + 1 < size && (v > 0.0) != (cosv[y * size + x + 1] > 0.0);
        const bool down = y + 1 < size && (v > 0.0) != (cosv[(y + 1) * size + x] > 0.0);
        out.edges.at(y, x) = (right || down) ? 1 : 0;
      }
  }
  return out;
}

Video gen_fingertip_video(const SubjectProfile& profile, double duration_s, double fps, std::size_t size,
                          std::uint64_t seed, const VideoOptions& opts) {
  profile.validate();
  if (!(opts.depth >= 0.0 && opts.depth < 1.0)) fail(ErrorKind::Config, "video: modulation depth must lie in [0, 1)");
  Video v;
  v.truth = gen_beat_train(profile.ppg, duration_s, fps, splitmix64(seed ^ 0xbea7ULL));
  v.ridge = gen_ridge_image(profile.ridge, size);
  const auto& s = v.truth.signal.samples;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double range = *hi - *lo;
  std::mt19937_64 rng(splitmix64(seed ^ 0xf4a3eULL));
  std::normal_distribution<double> n(0.0, 1.0);
  v.stack.fps = fps;
  v.stack.frames.reserve(s.size());
  for (double x : s) {
    const double norm = range > 0.0 ? (x - *lo) / range : 0.0;
    const double m = 1.0 - opts.depth + opts.depth * norm;
    image::GrayImage f(size, size);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
      const double val = v.ridge.intensity[i] * m + opts.pixel_noise * n(rng);
      f.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
    }
    v.stack.frames.push_back(std::move(f));
  }
  return v;
}

void SynthConfig::validate() const {
  if (subjects == 0) fail(ErrorKind::Config, "synth: subject count must be positive");
  if (recordings == 0) fail(ErrorKind::Config, "synth: recording count must be positive");
  if (!(duration_s >= 3.0)) fail(ErrorKind::Config, "synth: duration must be at least 3 s");
  if (!(fps > 0.0)) fail(ErrorKind::Config, "synth: fps must be positive");
  if (size < 32) fail(ErrorKind::Config, "synth: frame size must be at least 32");
  if (!(separability >= 0.0)) fail(ErrorKind::Config, "synth: separability must be non-negative");
}

std::uint64_t recording_seed(std::uint64_t seed, std::size_t subject, std::size_t recording) {
  return splitmix64(splitmix64(seed + 0x1000 * subject) + recording);
}

void write_dataset(const std::filesystem::path& dir, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    const auto profile = make_profile(s, cfg.separability, seed);
    for (std::size_t r = 0; r < cfg.recordings; ++r) {
      char name[64];
      std::snprintf(name, sizeof name, "subject_%02zu/rec_%02zu", s, r);
      const auto rdir = dir / name;
      std::filesystem::create_directories(rdir, ec);
      if (ec) fail(ErrorKind::Io, "cannot create " + rdir.string() + ": " + ec.message());
      const auto rseed = recording_seed(seed, s, r);
      const auto session = session_profile(profile, r, rseed);
      const auto video = gen_fingertip_video(session, cfg.duration_s, cfg.fps, cfg.size, rseed, cfg.video);
      for (std::size_t f = 0; f < video.stack.frames.size(); ++f) {
        char fname[32];
        std::snprintf(fname, sizeof fname, "frame_%05zu.pgm", f);
        image::write_pgm(rdir / fname, video.stack.frames[f]);
      }
      image::GrayImage edges = video.ridge.edges;
      for (auto& p : edges.pixels) p = p ? 255 : 0;
      image::write_pgm(rdir / "edges.pgm", edges);

      std::ostringstream truth;
      truth << "t,clean,observed,valley\n";
      std::size_t vi = 0;
      for (std::size_t t = 0; t < video.truth.clean.size(); ++t) {
        const bool valley = vi < video.truth.valleys.size() && video.truth.valleys[vi] == t;
        if (valley) ++vi;
        truth << t << ',' << fmt(video.truth.clean[t]) << ',' << fmt(video.truth.signal.samples[t]) << ','
              << (valley ? 1 : 0) << '\n';
      }
      write_file_atomic(rdir / "truth.csv", truth.str());

      std::ostringstream man;
      man << "subject=" << s << "\nsession=" << r << "\nfps=" << fmt(cfg.fps)
          << "\nframe_count=" << video.stack.frames.size() << "\nwidth=" << cfg.size << "\nheight=" << cfg.size
          << "\nprofile_seed=" << rseed << "\nbpm=" << fmt(session.ppg.bpm)
          << "\n";
      write_file_atomic(rdir / "manifest.txt", man.str());
    }
  }
  std::ostringstream top;
  top << "subjects=" << cfg.subjects << "\nrecordings=" << cfg.recordings << "\nduration_s=" << fmt(cfg.duration_s)
      << "\nfps=" << fmt(cfg.fps) << "\nsize=" << cfg.size << "\nseparability=" << fmt(cfg.separability)
      << "\nseed=" << seed << "\n";
  write_file_atomic(dir / "manifest.txt", top.str());
}

}  // namespace ppgfp::synth
