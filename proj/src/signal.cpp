#include "ppgfp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ppgfp/error.hpp"

namespace ppgfp::signal {

void SignalConfig::validate() const {
  if (!(detrend_s > 0.0)) fail(ErrorKind::Config, "signal.detrend_s must be positive");
  if (!(cutoff_hz > 0.0)) fail(ErrorKind::Config, "signal.cutoff_hz must be positive");
  if (!(valley_spacing > 0.0 && valley_spacing < 1.0)) fail(ErrorKind::Config, "signal.valley_spacing must lie in (0, 1)");
  if (!(min_corr > -1.0 && min_corr <= 1.0)) fail(ErrorKind::Config, "signal.min_corr must lie in (-1, 1]");
}

RawSignal frame_mean_intensity(const FrameStack& stack) {
  if (stack.frames.empty()) fail(ErrorKind::Input, "frame_mean_intensity: empty frame stack");
  RawSignal out;
  out.fs = stack.fps;
  out.samples.reserve(stack.frames.size());
  const auto w = stack.frames.front().width, h = stack.frames.front().height;
  for (const auto& f : stack.frames) {
    if (f.width != w || f.height != h) fail(ErrorKind::Input, "frame_mean_intensity: frames differ in size");
    std::uint64_t s = 0;
    for (auto p : f.pixels) s += p;
    out.samples.push_back(static_cast<double>(s) / static_cast<double>(f.pixels.size()));
  }
  return out;
}

RawSignal detrend(const RawSignal& sig, double window_s) {
  const double span = window_s * sig.fs;
  if (!(span >= 3.0)) fail(ErrorKind::Config, "detrend: window must cover at least 3 samples");
  auto n_win = static_cast<std::size_t>(std::lround(span));
  if (n_win % 2 == 0) ++n_win;
  const std::size_t half = n_win / 2;
  std::vector<double> w(n_win);
  for (std::size_t k = 0; k < n_win; ++k) {
    w[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k + 1) / static_cast<double>(n_win + 1)));
  }
  const auto& x = sig.samples;
  const std::size_t n = x.size();
  RawSignal out{std::vector<double>(n), sig.fs};
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(n - 1, t + half);
    double acc = 0.0, norm = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) {
      const double wk = w[j + half - t];
      acc += wk * x[j];
      norm += wk;
    }
    out.samples[t] = x[t] - acc / norm;
  }
  return out;
}

std::vector<double> lowpass_taps(double fs, double cutoff_hz) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) fail(ErrorKind::Config, "lowpass: cutoff must lie below Nyquist");
  auto n = static_cast<std::size_t>(std::ceil(4.0 * fs / cutoff_hz));
  if (n % 2 == 0) ++n;
  const double fc = cutoff_hz / fs;
  const double mid = static_cast<double>(n - 1) / 2.0;
  std::vector<double> h(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double m = static_cast<double>(k) - mid;
    const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    const double win = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n - 1));
    h[k] = sinc * win;
    sum += h[k];
  }
  for (auto& v : h) v /= sum;
  return h;
}

namespace {

/// Causal FIR with zero initial state.
std::vector<double> fir(std::span<const double> h, std::span<const double> x) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    const std::size_t kmax = std::min(h.size() - 1, t);
    for (std::size_t k = 0; k <= kmax; ++k) acc += h[k] * x[t - k];
    y[t] = acc;
  }
  return y;
}

}  // namespace

RawSignal lowpass(const RawSignal& sig, double cutoff_hz) {
  const auto h = lowpass_taps(sig.fs, cutoff_hz);
  const auto& x = sig.samples;
  const std::size_t n = x.size();
  if (n < 2) fail(ErrorKind::Input, "lowpass: signal too short");
  const std::size_t pad = std::min(3 * h.size(), n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t k = pad; k >= 1; --k) ext.push_back(2.0 * x[0] - x[k]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t k = 1; k <= pad; ++k) ext.push_back(2.0 * x[n - 1] - x[n - 1 - k]);

  // Forward pass, reverse, forward pass, reverse: the two linear-phase delays cancel.
  auto y = fir(h, ext);
  std::reverse(y.begin(), y.end());
  y = fir(h, y);
  std::reverse(y.begin(), y.end());
  return RawSignal{std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(pad),
                                       y.begin() + static_cast<std::ptrdiff_t>(pad + n)),
                   sig.fs};
}

double estimate_period(const RawSignal& sig) {
  const auto& x = sig.samples;
  const std::size_t n = x.size();
  const auto lag_min = static_cast<std::size_t>(std::floor(sig.fs * 60.0 / 180.0));
  const auto lag_max = static_cast<std::size_t>(std::ceil(sig.fs * 60.0 / 40.0));
  if (n < lag_max + 2) fail(ErrorKind::Quality, "no periodicity: signal shorter than the slowest beat");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::vector<double> c(x.size());
  for (std::size_t t = 0; t < n; ++t) c[t] = x[t] - mean;
  auto ac = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += c[t] * c[t + lag];
    return s / static_cast<double>(n - lag);
  };
  const double r0 = ac(0);
  if (!(r0 > 1e-12)) fail(ErrorKind::Quality, "no periodicity: flat signal");
  std::vector<double> r(lag_max + 2);
  for (std::size_t lag = lag_min > 0 ? lag_min - 1 : 0; lag <= lag_max + 1; ++lag) r[lag] = ac(lag) / r0;

  std::size_t best = 0;
  for (std::size_t lag = std::max<std::size_t>(lag_min, 1); lag <= lag_max; ++lag) {
    const bool peak = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
    if (peak && (best == 0 || r[lag] > r[best])) best = lag;
  }
  if (best == 0 || r[best] < 0.3) fail(ErrorKind::Quality, "no periodicity: no autocorrelation peak in 40-180 bpm");

  // A strong peak near half the lag means the maximum landed on the second harmonic.
  const auto half = best / 2;
  if (half >= lag_min && half >= 2) {
    std::size_t hb = 0;
    for (std::size_t lag = std::max(lag_min, half - half / 5); lag <= half + half / 5 && lag <= lag_max; ++lag) {
      const bool peak = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
      if (peak && (hb == 0 || r[lag] > r[hb])) hb = lag;
    }
    if (hb != 0 && r[hb] >= 0.85 * r[best]) best = hb;
  }
  // Parabolic refinement of the peak position.
  const double a = r[best - 1], b = r[best], d = r[best + 1];
  const double denom = a - 2.0 * b + d;
  const double off = denom < 0.0 ? 0.5 * (a - d) / denom : 0.0;
  return static_cast<double>(best) + std::clamp(off, -0.5, 0.5);
}

namespace {

// Long enough for three beats at 40 bpm, short enough to follow heart-rate changes.
constexpr double kPeriodWindow_s = 6.0;

// Beat period around every sample from overlapping windows hopped by one second.
std::vector<double> local_periods(const RawSignal& sig, double window_s) {
  const auto& x = sig.samples;
  const std::size_t n = x.size();
  const auto win = static_cast<std::size_t>(std::lround(window_s * sig.fs));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(sig.fs)));
  if (n <= win + hop) return std::vector<double>(n, estimate_period(sig));

  // One estimate per window; windows without a clear peak borrow from neighbours.
  std::vector<double> centers, est;
  std::size_t valid = 0;
  for (std::size_t start = 0; start + win <= n; start += hop) {
    RawSignal w{std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(start),
                                    x.begin() + static_cast<std::ptrdiff_t>(start + win)),
                sig.fs};
    centers.push_back(static_cast<double>(start) + 0.5 * static_cast<double>(win));
    try {
      est.push_back(estimate_period(w));
      ++valid;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Quality) throw;
      est.push_back(0.0);
    }
  }
  if (valid == 0) return std::vector<double>(n, estimate_period(sig));
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est[i] > 0.0) continue;
    for (std::size_t d = 1; d < est.size(); ++d) {
      if (i >= d && est[i - d] > 0.0) {
        est[i] = est[i - d];
        break;
      }
      if (i + d < est.size() && est[i + d] > 0.0) {
        est[i] = est[i + d];
        break;
      }
    }
  }
  std::vector<double> per(n);
  std::size_t k = 0;
  for (std::size_t t = 0; t < n; ++t) {
    while (k + 1 < centers.size() && std::abs(centers[k + 1] - static_cast<double>(t)) <= std::abs(centers[k] - static_cast<double>(t))) ++k;
    per[t] = est[k];
  }
  return per;
}

}  // namespace

std::vector<BeatSpan> separate_beats(const RawSignal& sig, double spacing_factor) {
  const auto& x = sig.samples;
  if (static_cast<double>(x.size()) < 3.0 * sig.fs) fail(ErrorKind::Input, "separate_beats: need at least 3 s of signal");
  const auto period = local_periods(sig, kPeriodWindow_s);

  // Candidates must lie below the mean of the surrounding beat, which rules out dicrotic notches.
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) prefix[t + 1] = prefix[t] + x[t];
  auto local_mean = [&](std::size_t t) {
    const auto half = static_cast<std::size_t>(0.5 * period[t]);
    const std::size_t lo = t > half ? t - half : 0, hi = std::min(x.size(), t + half + 1);
    return (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  };
  std::vector<std::size_t> minima;
  for (std::size_t t = 1; t + 1 < x.size(); ++t) {
    if (x[t] < x[t - 1] && x[t] <= x[t + 1] && x[t] < local_mean(t)) minima.push_back(t);
  }
  std::stable_sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<std::size_t> valleys;
  for (auto m : minima) {
    bool ok = true;
    for (auto v : valleys) {
      const double gap = spacing_factor * std::min(period[m], period[v]);
      if (std::abs(static_cast<double>(m) - static_cast<double>(v)) < gap) {
        ok = false;
        break;
      }
    }
    if (ok) valleys.push_back(m);
  }
  std::sort(valleys.begin(), valleys.end());
  std::vector<BeatSpan> beats;
  for (std::size_t k = 0; k + 1 < valleys.size(); ++k) beats.push_back({valleys[k], valleys[k + 1]});
  return beats;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) fail(ErrorKind::Dimension, "pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<std::size_t> select_beats(const RawSignal& sig, std::span<const BeatSpan> beats, double min_corr) {
  if (beats.size() < 3) fail(ErrorKind::Quality, "select_beats: fewer than 3 beats to select from");
  std::vector<std::size_t> lengths;
  for (const auto& b : beats) {
    if (b.end <= b.begin || b.end >= sig.samples.size()) fail(ErrorKind::Input, "select_beats: invalid beat span");
    lengths.push_back(b.length());
  }
  auto sorted = lengths;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const std::size_t med_len = std::max<std::size_t>(sorted[sorted.size() / 2], 2);

  std::vector<std::vector<double>> norm;
  for (const auto& b : beats) {
    std::span<const double> seg(sig.samples.data() + b.begin, b.length());
    norm.push_back(spline_resample(seg, med_len));
  }
  std::vector<double> tmpl(med_len), col(beats.size());
  for (std::size_t i = 0; i < med_len; ++i) {
    for (std::size_t k = 0; k < beats.size(); ++k) col[k] = norm[k][i];
    const auto mid = col.begin() + static_cast<std::ptrdiff_t>(col.size() / 2);
    std::nth_element(col.begin(), mid, col.end());
    double med = *mid;
    if (col.size() % 2 == 0) med = 0.5 * (med + *std::max_element(col.begin(), mid));
    tmpl[i] = med;
  }
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < beats.size(); ++k) {
    if (pearson(norm[k], tmpl) >= min_corr) kept.push_back(k);
  }
  if (kept.size() < 3) fail(ErrorKind::Quality, "select_beats: fewer than 3 beats match the template");
  return kept;
}

std::vector<double> spline_resample(std::span<const double> x, std::size_t n) {
  const std::size_t m = x.size();
  if (m < 2 || n < 2) fail(ErrorKind::Input, "spline_resample: need at least two samples in and out");
  // Natural spline second derivatives via the Thomas algorithm (unit knot spacing).
  std::vector<double> M(m, 0.0);
  if (m > 2) {
    const std::size_t k = m - 2;
    std::vector<double> c(k), d(k);
    for (std::size_t i = 0; i < k; ++i) d[i] = 6.0 * (x[i + 2] - 2.0 * x[i + 1] + x[i]);
    double beta = 4.0;
    c[0] = 1.0 / beta;
    d[0] /= beta;
    for (std::size_t i = 1; i < k; ++i) {
      beta = 4.0 - c[i - 1];
      c[i] = 1.0 / beta;
      d[i] = (d[i] - d[i - 1]) / beta;
    }
    for (std::size_t i = k - 1; i-- > 0;) d[i] -= c[i] * d[i + 1];
    for (std::size_t i = 0; i < k; ++i) M[i + 1] = d[i];
  }
  std::vector<double> y(n);
  const double step = static_cast<double>(m - 1) / static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    const double t = j + 1 == n ? static_cast<double>(m - 1) : static_cast<double>(j) * step;
    auto i = static_cast<std::size_t>(std::floor(t));
    if (i >= m - 1) i = m - 2;
    const double b = t - static_cast<double>(i), a = 1.0 - b;
    y[j] = a * x[i] + b * x[i + 1] + ((a * a * a - a) * M[i] + (b * b * b - b) * M[i + 1]) / 6.0;
  }
  return y;
}

std::vector<double> resample_beat(std::span<const double> beat) {
  if (beat.size() < 8) fail(ErrorKind::Input, "resample_beat: beat shorter than 8 samples");
  auto y = spline_resample(beat, kBeatLength);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double mn = *lo, range = *hi - *lo;
  if (!(range > 1e-12)) fail(ErrorKind::Quality, "resample_beat: constant beat cannot be normalized");
  for (auto& v : y) v = std::clamp((v - mn) / range, 0.0, 1.0);
  return y;
}

BeatExtraction extract_beats(const RawSignal& raw, const SignalConfig& cfg) {
  cfg.validate();
  BeatExtraction out;
  out.filtered = lowpass(detrend(raw, cfg.detrend_s), cfg.cutoff_hz);
  out.found = separate_beats(out.filtered, cfg.valley_spacing);
  const auto keep = select_beats(out.filtered, out.found, cfg.min_corr);
  for (auto k : keep) {
    const auto& b = out.found[k];
    out.kept.push_back(b);
    out.beats.push_back(resample_beat(std::span<const double>(out.filtered.samples.data() + b.begin, b.length())));
  }
  return out;
}

}  // namespace ppgfp::signal
