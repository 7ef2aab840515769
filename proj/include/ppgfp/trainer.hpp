#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppgfp/adam.hpp"
#include "ppgfp/dataset.hpp"
#include "ppgfp/losses.hpp"
#include "ppgfp/model.hpp"

namespace ppgfp::train {

struct AugmentConfig {
  bool ppg_scale = true;    // amplitude in [0.9, 1.1]
  bool ppg_jitter = true;   // Gaussian sigma 0.01
  bool ppg_stretch = true;  // time axis in [0.95, 1.05]
  bool fp_flip = true;      // horizontal, probability 1/2
  bool fp_rotate = true;    // [-10, 10] degrees, probability 1/2
  bool fp_crop = true;      // crop-and-resize of at least 0.9 area, probability 1/2
  bool fp_noise = true;     // Gaussian sigma 0.02, probability 1/2

  static AugmentConfig none();
};

/// Scale, jitter and stretch (each when enabled), then min-max renormalization.
/// With everything disabled the input is returned unchanged.
std::vector<double> augment_ppg(std::span<const double> beat, const AugmentConfig& cfg, std::uint64_t seed);

/// Random subset of flip, rotation, crop-and-resize and noise on a 64x64
/// row-major image; output stays in [0, 1].
std::vector<double> augment_fingerprint(std::span<const double> fp, const AugmentConfig& cfg, std::uint64_t seed);

/// Exact transforms used by augment_fingerprint.
std::vector<double> flip_horizontal(std::span<const double> img, std::size_t side);
std::vector<double> rotate(std::span<const double> img, std::size_t side, double degrees);
std::vector<double> crop_resize(std::span<const double> img, std::size_t side, double x0, double y0, double crop_side);

enum class SplitMode { Beats, Sessions };

SplitMode parse_split(const std::string& s);
std::string to_string(SplitMode m);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  loss::LossWeights weights;
  AugmentConfig aug;
  double pair_factor = 4.0;     // positives = factor x one-to-one count
  double negative_ratio = 1.0;  // negatives per positive
  SplitMode split = SplitMode::Beats;
  double train_fraction = 0.8;

  void validate() const;
};

/// Sample ids (indices into Dataset::samples) on each side of the split.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Beats: every user's samples shuffled and cut at train_fraction.
/// Sessions: the lowest session trains, the others validate.
Split make_split(const data::Dataset& ds, SplitMode mode, double train_fraction, std::uint64_t seed);

struct Pair {
  std::size_t beat;         // sample id supplying the PPG beat
  std::size_t fingerprint;  // sample id supplying the fingerprint
  bool positive;
};

/// Positives: factor x n distinct (beat, fingerprint) cross matches within the
/// target's pool samples (capped at n^2). Negatives: ratio x positives; half
/// pair an impostor's beat with the same impostor's fingerprint, the rest mix
/// one target modality with an impostor modality.
std::vector<Pair> make_pairs(const data::Dataset& ds, std::size_t target, std::span<const std::size_t> pool,
                             double factor, double negative_ratio, std::mt19937_64& rng);

/// Shuffled batches of near-equal size, each with a proportional share of positives.
std::vector<std::vector<Pair>> make_batches(std::span<const Pair> pairs, std::size_t batch, std::mt19937_64& rng);

/// One model input of a batch. Keys identify samples so each is encoded once per batch.
struct BatchItem {
  std::span<const double> beat;
  std::span<const double> fingerprint;
  std::size_t beat_key;
  std::size_t fingerprint_key;
  bool positive;
};

struct BatchLoss {
  ad::Var total;
  ad::Var l_c;
  ad::Var l_a;  // zero constant when unused
  ad::Var l_s;
  ad::Var mu_u;  // updated moments; absent sides hold zeros
  ad::Var mu_v;
  Tensor mean_u;  // positive batch means
  Tensor mean_v;
};

/// Forward pass and total loss of one batch against the previous moments.
/// Alignment and spread terms need both latents, so single-modality variants
/// train on the classification loss alone.
BatchLoss batch_loss(Model& model, ad::Tape& tape, std::span<const BatchItem> items, const loss::Moments& prev,
                     const loss::LossWeights& w, double pos_weight);

struct LossRow {
  std::size_t epoch, batch;
  double l_c, l_a, l_s, l;
};

struct MomentRow {
  std::size_t epoch, batch;
  Tensor prev_u, prev_v;  // moments entering the batch
  Tensor mean_u, mean_v;  // positive batch means
  Tensor mu_u, mu_v;      // moments after the update
};

struct TrainResult {
  std::vector<LossRow> losses;
  std::vector<MomentRow> moments;
  loss::Moments final_moments;
  std::vector<std::size_t> used_ids;  // every sample id that entered a gradient step
  std::size_t moment_skips = 0;  // batches without positives: L_C only, moments unchanged
  double pos_weight = 1.0;
};

/// Trains `model` for one target user on the training side of `split`.
TrainResult train_user(Model& model, const data::Dataset& ds, const Split& split, std::size_t target,
                       const TrainConfig& cfg);

std::string losses_csv(std::span<const LossRow> rows);
std::string moments_csv(std::span<const MomentRow> rows);

/// Checkpoint = model tensors + moments, in the container format.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const loss::Moments& moments);
loss::Moments load_checkpoint(const std::filesystem::path& path, Model& model);

}  // namespace ppgfp::train
