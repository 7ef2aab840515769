#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"
#include "ppgfp/signal.hpp"
#include "ppgfp/synth.hpp"

using namespace ppgfp;
using namespace ppgfp::synth;

namespace {

std::vector<std::vector<double>> cycles(const BeatTrain& train, const std::vector<double>& x, std::size_t len = 100) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i + 1 < train.valleys.size(); ++i) {
    std::vector<double> seg(x.begin() + static_cast<std::ptrdiff_t>(train.valleys[i]),
                            x.begin() + static_cast<std::ptrdiff_t>(train.valleys[i + 1]) + 1);
    out.push_back(signal::spline_resample(seg, len));
  }
  return out;
}

double mean_corr(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b, bool same) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (same && i == j) continue;
      s += signal::pearson(a[i], b[j]);
      ++n;
    }
  return s / static_cast<double>(n);
}

// Peak normalized cross-correlation over shifts of up to `max_lag` samples.
double cross_corr(const std::vector<double>& a, const std::vector<double>& b, std::size_t max_lag) {
  double best = -1.0;
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    const auto l = static_cast<std::ptrdiff_t>(lag);
    best = std::max(best, signal::pearson(std::vector<double>(a.begin() + l, a.end()), std::vector<double>(b.begin(), b.end() - l)));
    best = std::max(best, signal::pearson(std::vector<double>(a.begin(), a.end() - l), std::vector<double>(b.begin() + l, b.end())));
  }
  return best;
}

std::vector<double> as_double(const image::GrayImage& img) { return {img.pixels.begin(), img.pixels.end()}; }

}  // namespace

TEST_CASE("gen_beat_train has one boundary per cycle") {
  const auto train = gen_beat_train(PpgProfile{}, 30.0, 60.0, 1);
  CHECK(train.signal.samples.size() == 1800);
  CHECK(train.valleys.size() >= 35);
  CHECK(train.valleys.size() <= 37);
  for (std::size_t i = 1; i < train.valleys.size(); ++i) {
    const double gap = static_cast<double>(train.valleys[i] - train.valleys[i - 1]);
    CHECK(gap >= 50.0 * 0.97 - 1.0);
    CHECK(gap <= 50.0 * 1.03 + 1.0);
  }
}

TEST_CASE("noiseless cycles are identical up to rate jitter") {
  PpgProfile p;
  p.noise = 0.0;
  p.shape_jitter = 0.0;
  const auto train = gen_beat_train(p, 20.0, 60.0, 2);
  // Valleys sit on integer samples, so cycles are compared over shifts of up to one input sample.
  const auto c = cycles(train, train.clean, 500);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(cross_corr(c[0], c[i], 10) >= 0.999);
}

TEST_CASE("beats of distinct profiles differ more than beats of one profile") {
  const auto a = make_profile(0, 1.0, 10), b = make_profile(1, 1.0, 10);
  const auto ta = gen_beat_train(a.ppg, 20.0, 60.0, 3), tb = gen_beat_train(b.ppg, 20.0, 60.0, 4);
  const auto ca = cycles(ta, ta.signal.samples), cb = cycles(tb, tb.signal.samples);
  const double intra = 0.5 * (mean_corr(ca, ca, true) + mean_corr(cb, cb, true));
  CHECK(mean_corr(ca, cb, false) < intra);
}

TEST_CASE("gen_ridge_image examples") {
  RidgeProfile flat;
  flat.amplitude = 0.0;
  const auto f = gen_ridge_image(flat, 48);
  for (auto p : f.image.pixels) CHECK(p == f.image.pixels[0]);
  for (auto p : f.edges.pixels) CHECK(p == 0);

  RidgeProfile horizontal;
  horizontal.orientation = std::numbers::pi / 2.0;  // phase advances along rows
  const auto h = gen_ridge_image(horizontal, 64);
  const auto col = [&](std::size_t x) {
    std::vector<double> c;
    for (std::size_t y = 0; y < 64; ++y) c.push_back(h.intensity[y * 64 + x]);
    return c;
  };
  const auto c = col(30);
  std::size_t best = 0;
  double best_r = -2.0;
  for (std::size_t lag = 4; lag <= 12; ++lag) {
    const std::vector<double> a(c.begin(), c.end() - static_cast<std::ptrdiff_t>(lag));
    const std::vector<double> b(c.begin() + static_cast<std::ptrdiff_t>(lag), c.end());
    const double r = signal::pearson(a, b);
    if (r > best_r) {
      best_r = r;
      best = lag;
    }
  }
  CHECK(best == 8);
  // Columns agree: the pattern does not vary along a row.
  CHECK(signal::pearson(col(3), col(60)) > 0.999);

  CHECK_THROWS_AS(gen_ridge_image(RidgeProfile{}, 16), Error);
}

TEST_CASE("ridge images of distinct subjects are weakly correlated") {
  double total = 0.0;
  std::size_t pairs = 0;
  std::vector<std::vector<double>> imgs;
  for (std::size_t s = 0; s < 8; ++s) imgs.push_back(as_double(gen_ridge_image(make_profile(s, 1.0, 99).ridge, 96).image));
  for (std::size_t i = 0; i < imgs.size(); ++i)
    for (std::size_t j = i + 1; j < imgs.size(); ++j) {
      total += std::abs(signal::pearson(imgs[i], imgs[j]));
      ++pairs;
    }
  CHECK(total / static_cast<double>(pairs) < 0.3);
}

TEST_CASE("flat ridge video carries the beat train in its mean intensity") {
  auto profile = make_profile(0, 1.0, 5);
  profile.ridge.amplitude = 0.0;
  const auto video = gen_fingertip_video(profile, 10.0, 60.0, 48, 6);
  CHECK(video.stack.frames.size() == 600);
  const auto mean = signal::frame_mean_intensity(video.stack);
  CHECK(signal::pearson(mean.samples, video.truth.signal.samples) >= 0.99);
}

TEST_CASE("zero modulation depth leaves no periodicity") {
  const auto profile = make_profile(1, 1.0, 5);
  VideoOptions opts;
  opts.depth = 0.0;
  opts.pixel_noise = 0.0;
  const auto video = gen_fingertip_video(profile, 10.0, 60.0, 48, 6, opts);
  const auto mean = signal::frame_mean_intensity(video.stack);
  try {
    signal::separate_beats(signal::lowpass(signal::detrend(mean)));
    FAIL("expected a quality error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Quality);
  }
}

TEST_CASE("signal pipeline keeps most generated beats") {
  for (std::size_t s = 0; s < 3; ++s) {
    const auto profile = make_profile(s, 1.0, 17);
    const auto video = gen_fingertip_video(profile, 30.0, 60.0, 48, 100 + s);
    const auto ex = signal::extract_beats(signal::frame_mean_intensity(video.stack));
    const double truth = static_cast<double>(video.truth.valleys.size() - 1);
    CAPTURE(s);
    CHECK(static_cast<double>(ex.kept.size()) >= 0.8 * truth);
  }
}

TEST_CASE("generation is deterministic") {
  const auto p = make_profile(3, 1.0, 21);
  const auto q = make_profile(3, 1.0, 21);
  CHECK(p.ppg.bpm == q.ppg.bpm);
  CHECK(p.ridge.orientation == q.ridge.orientation);
  const auto a = gen_fingertip_video(p, 4.0, 60.0, 40, 8), b = gen_fingertip_video(q, 4.0, 60.0, 40, 8);
  CHECK(a.truth.signal.samples == b.truth.signal.samples);
  CHECK(a.truth.valleys == b.truth.valleys);
  for (std::size_t i = 0; i < a.stack.frames.size(); ++i) CHECK(a.stack.frames[i] == b.stack.frames[i]);
  const auto c = gen_fingertip_video(p, 4.0, 60.0, 40, 9);
  CHECK(c.truth.signal.samples != a.truth.signal.samples);
  CHECK(make_profile(4, 1.0, 21).ppg.bpm != p.ppg.bpm);
}

TEST_CASE("separability zero makes subjects identical") {
  const auto a = make_profile(0, 0.0, 3), b = make_profile(5, 0.0, 3);
  CHECK(a.ppg.bpm == b.ppg.bpm);
  CHECK(a.ridge.period == b.ridge.period);
  CHECK(a.ridge.orientation == b.ridge.orientation);
}

TEST_CASE("profile validation") {
  SubjectProfile p;
  CHECK_NOTHROW(p.validate());
  p.ppg.bpm = 200.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p.ppg.bpm = 70.0;
  p.ridge.period = 3.0;
  CHECK_THROWS_AS(p.validate(), Error);
  CHECK_THROWS_AS(gen_beat_train(PpgProfile{}, 2.0, 60.0, 1), Error);
}

TEST_CASE("write_dataset layout and byte determinism") {
  const auto root = std::filesystem::temp_directory_path() / "ppgfp_test_synth";
  std::filesystem::remove_all(root);
  SynthConfig cfg;
  cfg.subjects = 2;
  cfg.recordings = 1;
  cfg.duration_s = 3.0;
  cfg.size = 32;
  write_dataset(root / "a", cfg, 7);
  write_dataset(root / "b", cfg, 7);
  for (const char* sub : {"subject_00/rec_00", "subject_01/rec_00"}) {
    const auto dir = root / "a" / sub;
    CHECK(std::filesystem::exists(dir / "manifest.txt"));
    CHECK(std::filesystem::exists(dir / "truth.csv"));
    CHECK(std::filesystem::exists(dir / "edges.pgm"));
    CHECK(std::filesystem::exists(dir / "frame_00179.pgm"));
    CHECK_FALSE(std::filesystem::exists(dir / "frame_00180.pgm"));
  }
  for (const auto& e : std::filesystem::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root / "a");
    CHECK(read_file(e.path()) == read_file(root / "b" / rel));
  }
  cfg.subjects = 0;
  CHECK_THROWS_AS(write_dataset(root / "c", cfg, 7), Error);
  std::filesystem::remove_all(root);
}
