#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ppgfp/config.hpp"
#include "ppgfp/dataset.hpp"
#include "ppgfp/eval.hpp"
#include "ppgfp/gradcheck.hpp"
#include "ppgfp/keyvalue.hpp"

/// Whole pipeline stages over directories. Every stage writes run_config.txt
/// (the complete config) and run_manifest.txt (command, version, seed and
/// inputs) into its output directory, so any output can be regenerated from
/// its directory alone.
namespace ppgfp::run {

const char* version();

inline constexpr const char* kManifestFile = "run_manifest.txt";
inline constexpr const char* kConfigFile = "run_config.txt";

void write_manifest(const std::filesystem::path& out, std::string_view command, const RunConfig& cfg,
                    const KeyValues& inputs);

/// The config a previous run wrote into `dir`.
RunConfig read_run_config(const std::filesystem::path& dir);

/// subject_XX/rec_YY recordings from cfg.synth, seeded by cfg.seed.
void synth(const RunConfig& cfg, const std::filesystem::path& out);

/// Both pipelines over every raw recording under `in`; see data::preprocess_tree.
data::PreprocessSummary preprocess(const RunConfig& cfg, const std::filesystem::path& in,
                                   const std::filesystem::path& out);

/// One model per target user (every user when `target` is empty), written to
/// out/user_XX/{checkpoint.bin, losses.csv, moments.csv}. The split, the
/// training stream and each model's initialization derive from cfg.seed.
std::vector<std::size_t> train(const RunConfig& cfg, const std::filesystem::path& data_dir,
                               std::optional<std::size_t> target, const std::filesystem::path& out);

/// Scores the validation side of the training split with the checkpoints in
/// `model_dir`. Model, split and seed come from the training run; `cfg`
/// contributes only its eval settings. Writes metrics.csv plus
/// user_XX_roc.csv and user_XX_scores.csv.
std::vector<eval::UserEval> evaluate(const RunConfig& cfg, const std::filesystem::path& data_dir,
                                     const std::filesystem::path& model_dir, std::optional<std::size_t> target,
                                     const std::filesystem::path& out);

std::string metrics_csv(std::span<const eval::UserEval> rows);

/// Every variant for every target user: ablation.csv, ablation_users.csv, ablation.txt.
eval::AblationReport ablate(const RunConfig& cfg, const std::filesystem::path& data_dir,
                            std::optional<std::size_t> target, const std::filesystem::path& out);

/// Objective gradcheck on the tiny model seeded by cfg.seed; writes gradcheck.txt when `out` is given.
ad::GradReport gradcheck(const RunConfig& cfg, const std::optional<std::filesystem::path>& out);

}  // namespace ppgfp::run
