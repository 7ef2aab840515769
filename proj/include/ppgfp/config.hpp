#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ppgfp/dataset.hpp"
#include "ppgfp/eval.hpp"
#include "ppgfp/model.hpp"
#include "ppgfp/synth.hpp"
#include "ppgfp/trainer.hpp"

namespace ppgfp {

/// desk: d=32, d_h=16, N=2, 5-sample PPG tokens, 64-pixel fingerprint tokens,
/// 40 epochs of batch 64. full: d=128, d_h=64, N=2, one scalar per token,
/// 200 epochs of batch 256.
enum class Preset { Desk, Full };

Preset parse_preset(const std::string& s);
std::string to_string(Preset p);

/// Everything one CLI run depends on. A value-initialized RunConfig is the
/// full preset; defaults() starts from the desk preset.
struct RunConfig {
  std::uint64_t seed = 0;
  Preset preset = Preset::Full;
  ModelConfig model;
  train::TrainConfig train;
  data::PreprocessConfig preprocess;
  synth::SynthConfig synth;
  eval::EvalConfig eval;

  static RunConfig defaults(Preset p = Preset::Desk);

  /// Sets one key from its text value; unknown keys raise a config error.
  void set(std::string_view key, const std::string& value);
  void validate() const;

  /// Every key with its current value; parse_run_config reproduces this config.
  std::string to_text() const;
};

/// Keys accepted by RunConfig::set, in to_text order.
std::vector<std::string> run_config_keys();

/// Starts from the desk preset. `preset` is applied first so that every
/// other key overrides it.
RunConfig parse_run_config(std::string_view text, std::string_view source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ppgfp
