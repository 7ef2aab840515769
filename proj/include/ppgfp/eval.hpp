#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppgfp/dataset.hpp"
#include "ppgfp/losses.hpp"
#include "ppgfp/model.hpp"
#include "ppgfp/trainer.hpp"

namespace ppgfp::eval {

/// Classifier outputs with labels 1 (genuine) and 0 (impostor).
struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t genuine() const;
  std::size_t impostor() const;
  /// Equal lengths, finite scores, labels in {0, 1}, both classes present.
  void validate() const;
};

/// A score is accepted when score >= threshold.
struct RocPoint {
  double threshold;
  double far;  // impostors accepted / impostors
  double frr;  // genuine rejected / genuine
};

/// Thresholds are -inf, the sorted unique scores, then +inf. FAR is
/// non-increasing and FRR non-decreasing along the curve.
std::vector<RocPoint> roc(const ScoreSet& s);

enum class EerMode { Linear, Step };

EerMode parse_eer_mode(const std::string& s);
std::string to_string(EerMode m);

struct EerResult {
  double eer;
  double threshold;  // first curve threshold with FAR <= FRR
};

/// Linear: FAR/FRR crossing interpolated between the two points around the
/// first FAR <= FRR. Step: the mean of FAR and FRR at whichever of those two
/// points has the smaller gap. Not clamped to 0.5, so a scorer that inverts
/// the labels reports an EER above one half.
EerResult eer(std::span<const RocPoint> curve, EerMode mode = EerMode::Linear);

/// Fraction of pairs classified correctly with acceptance at score >= threshold.
double accuracy(const ScoreSet& s, double threshold);

std::string roc_csv(std::span<const RocPoint> curve);

struct EvalConfig {
  EerMode mode = EerMode::Linear;
  std::optional<double> threshold;  // ACC threshold; the EER threshold when absent
};

struct UserEval {
  std::size_t user = 0;
  ScoreSet scores;
  EerResult eer{};
  double threshold = 0.0;  // used for ACC
  double acc = 0.0;
  // Fused models only, NaN otherwise: cos(mu_u, mu_v), and the mean over
  // impostor pairs of cos(mu_u, v) and cos(mu_v, u).
  double moment_cos;
  double impostor_cos;
};

/// Genuine pairs: every validation beat of the target against every
/// validation fingerprint of the target. Impostor pairs: the same cross
/// product within each other user's validation samples, i.e. an impostor
/// presenting their own finger.
UserEval evaluate_user(Model& model, const data::Dataset& ds, const train::Split& split, std::size_t target,
                       const loss::Moments& moments, const EvalConfig& cfg);

struct UserRun {
  train::TrainResult train;
  UserEval eval;
};

/// Fresh model from `model_seed`, train_user, then evaluate_user.
UserRun run_user(const ModelConfig& mc, std::uint64_t model_seed, const data::Dataset& ds, const train::Split& split,
                 std::size_t target, const train::TrainConfig& tc, const EvalConfig& ec);

struct AblationRow {
  Variant variant;
  std::size_t user;
  double acc;
  double eer;
};

struct VariantSummary {
  Variant variant;
  double acc;  // mean over users
  double eer;
  double flops;  // analytic, one pair forward
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<VariantSummary> summary;

  std::string csv() const;           // variant,modality,ACC,EER,FLOPs
  std::string per_user_csv() const;  // variant,user,ACC,EER
  std::string text() const;
};

/// Modality label of a variant: ppg, fingerprint or ppg+fingerprint.
std::string modality(Variant v);

/// Trains and evaluates every variant for every user with the same model
/// seeds and split. The variants must include ppg, fingerprint and fused.
/// For the ppg variant it asserts that neither the image pipeline nor the
/// fingerprint encoder ran.
AblationReport ablation_run(const data::Dataset& ds, const train::Split& split, std::span<const std::size_t> users,
                            const ModelConfig& base, std::uint64_t model_seed, const train::TrainConfig& tc,
                            const EvalConfig& ec, std::span<const Variant> variants);

}  // namespace ppgfp::eval
