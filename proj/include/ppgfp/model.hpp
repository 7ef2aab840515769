#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppgfp/attention.hpp"
#include "ppgfp/container.hpp"
#include "ppgfp/ssm.hpp"

namespace ppgfp {

enum class Variant { Fused, Ppg, Fingerprint };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  ssm::EncoderConfig enc_u{128, 64, 2, 300, 1};
  ssm::EncoderConfig enc_v{128, 64, 2, 4096, 1};
  std::size_t heads = 4;
  bool per_head_scale = false;
  Variant variant = Variant::Fused;

  std::size_t width() const { return enc_u.width; }
  bool uses_ppg() const { return variant != Variant::Fingerprint; }
  bool uses_fingerprint() const { return variant != Variant::Ppg; }
  void validate() const;
};

/// Latents of one pair. Single-modality variants leave the other side empty
/// and set z to the present latent.
struct Latents {
  std::optional<ad::Var> u;
  std::optional<ad::Var> v;
  ad::Var z;
  ad::Var logit;  // [1, 1]
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  ad::Var encode_u(ad::Tape& tape, std::span<const double> beat) { return enc_u_.encode(tape, beat); }
  ad::Var encode_v(ad::Tape& tape, std::span<const double> fingerprint) {
    ++v_encodings_;
    return enc_v_.encode(tape, fingerprint);
  }
  /// Number of fingerprint encodings run by this model.
  std::size_t v_encodings() const { return v_encodings_; }

  /// Cross-attention, pooling, projection, fusion and classification from
  /// encoder outputs. Pass only the sequences the variant uses.
  Latents head(ad::Tape& tape, std::optional<ad::Var> g_u, std::optional<ad::Var> g_v);
  Latents forward(ad::Tape& tape, std::span<const double> beat, std::span<const double> fingerprint);

  /// sigmoid(logit) for one pair.
  double score(std::span<const double> beat, std::span<const double> fingerprint);

  /// Parameters the variant actually trains, in a fixed order.
  std::vector<ad::Parameter*> parameters();

  /// Keeps every SSM decay strictly negative; returns the number of clamped entries.
  std::size_t project_stable();

  std::vector<NamedTensor> state() const;
  void load_state(std::span<const NamedTensor> tensors);

  /// Analytic forward operation count for one pair.
  double flops() const;

  ssm::Encoder& enc_u() { return enc_u_; }
  ssm::Encoder& enc_v() { return enc_v_; }
  xattn::MultiHead& u2v() { return u2v_; }
  xattn::MultiHead& v2u() { return v2u_; }
  xattn::Classifier& classifier() { return clf_; }

 private:
  ModelConfig cfg_;
  std::mt19937_64 rng_;
  ssm::Encoder enc_u_;
  ssm::Encoder enc_v_;
  xattn::MultiHead u2v_;  // queries from the PPG side, produces u
  xattn::MultiHead v2u_;  // queries from the fingerprint side, produces v
  xattn::Classifier clf_;
  std::size_t v_encodings_ = 0;

  std::vector<ad::Parameter*> all_parameters();
};

}  // namespace ppgfp
