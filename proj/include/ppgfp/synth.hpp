#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ppgfp/image.hpp"
#include "ppgfp/signal.hpp"

namespace ppgfp::synth {

/// One cardiac cycle over phase p in [0, 1):
///   sys_amp*G(p; sys_pos, sys_width) + dic_ratio*G(p; dic_pos, dic_width)
///   + runoff*(1 - p)*smoothstep(p / sys_pos)
/// so the diastolic run-off ends in a valley at every cycle boundary.
struct PpgProfile {
  double bpm = 72.0;
  double sys_pos = 0.28;
  double sys_width = 0.075;
  double dic_pos = 0.52;
  double dic_width = 0.11;
  double dic_ratio = 0.45;
  double runoff = 0.5;
  double noise = 0.01;       // additive Gaussian sigma, in units of the systolic amplitude
  double shape_jitter = 0.01;  // per-cycle sigma of the shape parameters
  double drift = 0.15;       // slow baseline wander amplitude
};

/// Ridge phase: 2 pi / period * (a + curvature * (a^2 - b^2) / (2 size)) + phase,
/// with (a, b) the pixel offset from the centre rotated by `orientation`.
struct RidgeProfile {
  double period = 8.0;
  double orientation = 0.0;
  double curvature = 0.0;
  double phase = 0.0;
  double amplitude = 40.0;
  double base = 140.0;
  double illum_x = 0.0;  // relative illumination slope across the image
  double illum_y = 0.0;
  double shift_x = 0.0;  // pattern translation in pixels
  double shift_y = 0.0;
};

struct SubjectProfile {
  PpgProfile ppg;
  RidgeProfile ridge;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Population mean plus separability * spread * N(0, 1) per parameter.
SubjectProfile make_profile(std::size_t subject, double separability, std::uint64_t seed);

/// Session-level variation of a subject: heart-rate shift, finger placement, illumination.
SubjectProfile session_profile(const SubjectProfile& base, std::size_t session, std::uint64_t seed);

struct BeatTrain {
  signal::RawSignal signal;         // observed: clean + drift + noise
  std::vector<double> clean;        // noiseless, drift-free waveform
  std::vector<std::size_t> valleys;  // exact cycle boundaries (argmin of each clean cycle)
};

BeatTrain gen_beat_train(const PpgProfile& profile, double duration_s, double fs, std::uint64_t seed);

struct RidgeImage {
  image::GrayImage image;
  image::GrayImage edges;        // zero crossings of the ridge cosine (0/1)
  std::vector<double> intensity;  // unquantized
};

RidgeImage gen_ridge_image(const RidgeProfile& profile, std::size_t size);

struct VideoOptions {
  double depth = 0.3;        // modulation spans [1 - depth, 1]
  double pixel_noise = 1.5;  // Gaussian sigma in intensity units
};

struct Video {
  signal::FrameStack stack;
  BeatTrain truth;
  RidgeImage ridge;
};

Video gen_fingertip_video(const SubjectProfile& profile, double duration_s, double fps, std::size_t size,
                          std::uint64_t seed, const VideoOptions& opts = {});

struct SynthConfig {
  std::size_t subjects = 8;
  std::size_t recordings = 2;
  double duration_s = 30.0;
  double fps = 60.0;
  std::size_t size = 96;
  double separability = 1.0;
  VideoOptions video;
  void validate() const;
};

/// Seed for (subject, recording) derived from the run seed.
std::uint64_t recording_seed(std::uint64_t seed, std::size_t subject, std::size_t recording);

/// Writes subject_XX/rec_YY/{frame_NNNNN.pgm, manifest.txt, truth.csv, edges.pgm}
/// plus a top-level manifest.txt.
void write_dataset(const std::filesystem::path& dir, const SynthConfig& cfg, std::uint64_t seed);

}  // namespace ppgfp::synth
