#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ppgfp/image.hpp"

namespace ppgfp::signal {

inline constexpr std::size_t kBeatLength = 300;

struct FrameStack {
  std::vector<image::GrayImage> frames;
  double fps = 60.0;
};

struct RawSignal {
  std::vector<double> samples;
  double fs = 60.0;
};

/// Inclusive sample interval [begin, end] between two consecutive valleys.
struct BeatSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin + 1; }
};

struct SignalConfig {
  double detrend_s = 2.0;
  double cutoff_hz = 4.0;
  double valley_spacing = 0.5;  // minimum valley distance as a fraction of the beat period
  double min_corr = 0.80;       // template correlation needed to keep a beat
  void validate() const;
};

RawSignal frame_mean_intensity(const FrameStack& stack);

/// Subtracts a Hann-weighted centered moving average. The window has
/// round(window_s * fs) samples, forced odd; edges use truncated, renormalized weights.
RawSignal detrend(const RawSignal& sig, double window_s = 2.0);

/// Hamming windowed-sinc taps with ceil(4 fs / cutoff) entries rounded up to odd, unit DC gain.
std::vector<double> lowpass_taps(double fs, double cutoff_hz);

/// Zero-phase (forward-backward) FIR low-pass with odd-reflection padding.
RawSignal lowpass(const RawSignal& sig, double cutoff_hz = 4.0);

/// Beat period in samples from the autocorrelation peak inside 40-180 bpm.
double estimate_period(const RawSignal& sig);

/// Valley-to-valley beats. Valleys are local minima below the mean of the
/// surrounding period, taken deepest first, at
/// least spacing_factor times the local beat period apart; the period is
/// estimated in 6 s windows so a changing heart rate is followed.
std::vector<BeatSpan> separate_beats(const RawSignal& sig, double spacing_factor = 0.5);

/// Indices (into `beats`) of beats whose correlation with the point-wise
/// median template reaches `min_corr`.
std::vector<std::size_t> select_beats(const RawSignal& sig, std::span<const BeatSpan> beats, double min_corr = 0.80);

/// Natural cubic spline through samples at integer knots, evaluated at n
/// evenly spaced points from the first to the last knot.
std::vector<double> spline_resample(std::span<const double> x, std::size_t n);

/// Spline resampling to kBeatLength samples followed by min-max normalization.
std::vector<double> resample_beat(std::span<const double> beat);

struct BeatExtraction {
  RawSignal filtered;
  std::vector<BeatSpan> found;
  std::vector<BeatSpan> kept;
  std::vector<std::vector<double>> beats;  // one normalized waveform per kept span
};

/// detrend -> lowpass -> separate -> select -> resample.
BeatExtraction extract_beats(const RawSignal& raw, const SignalConfig& cfg = {});

/// Pearson correlation; zero when either side is constant.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace ppgfp::signal
