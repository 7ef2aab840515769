#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ppgfp/image.hpp"
#include "ppgfp/signal.hpp"

namespace ppgfp::data {

/// One kept PPG beat and the fingerprint averaged over the same frames.
/// Fingerprints are absent when the image pipeline was not run.
struct Sample {
  std::size_t user = 0;
  std::size_t session = 0;
  std::vector<double> beat;         // kBeatLength values in [0, 1]
  std::vector<double> fingerprint;  // 4096 values in [0, 1], row-major, or empty
};

struct Dataset {
  std::vector<Sample> samples;

  std::vector<std::size_t> users() const;     // sorted, unique
  std::vector<std::size_t> sessions() const;  // sorted, unique
  std::vector<std::size_t> ids_of(std::size_t user) const;
  bool has_fingerprints() const;
  void validate() const;
};

struct PreprocessConfig {
  signal::SignalConfig signal;
  image::FingerprintConfig image;
  bool fingerprints = true;  // false skips the image pipeline entirely
  void validate() const;
};

/// Outcome for one recording. On quality failure `ok` is false and `error` says why.
struct RecordingResult {
  std::size_t user = 0;
  std::size_t session = 0;
  bool ok = false;
  std::string error;
  std::size_t found = 0;
  std::size_t kept = 0;
  std::vector<Sample> samples;
};

/// Mean intensity -> beats; per kept beat, the fingerprint over its frame span.
RecordingResult preprocess_recording(const signal::FrameStack& stack, std::size_t user, std::size_t session,
                                     const PreprocessConfig& cfg);

// ---- disk layout ------------------------------------------------------------
// Raw recording:   <dir>/manifest.txt (subject, session, fps, frame_count, width, height)
//                  <dir>/frame_NNNNN.pgm
// Preprocessed:    <dir>/manifest.txt (subject, session, status, found, kept, error)
//                  <dir>/beats.bin         beat_0000 ... shape [300]
//                  <dir>/fingerprints.bin  fp_0000 ... shape [64, 64]
//                  <dir>/beats.csv         one beat per row

struct RawRecording {
  std::size_t user = 0;
  std::size_t session = 0;
  signal::FrameStack stack;
};

RawRecording read_recording(const std::filesystem::path& dir);

/// Recording directories (those holding a manifest.txt) below `root`, sorted.
std::vector<std::filesystem::path> find_recordings(const std::filesystem::path& root);

void write_recording_result(const std::filesystem::path& dir, const RecordingResult& r);

/// Loads every preprocessed recording with status ok below `root`.
Dataset load_dataset(const std::filesystem::path& root);

struct PreprocessSummary {
  std::size_t recordings = 0;
  std::size_t failed = 0;
  std::size_t samples = 0;
};

/// Preprocesses every recording under `in_root` into the mirrored layout under
/// `out_root` and writes report.csv. Raises a data error only if all recordings fail.
PreprocessSummary preprocess_tree(const std::filesystem::path& in_root, const std::filesystem::path& out_root,
                                  const PreprocessConfig& cfg);

}  // namespace ppgfp::data
