#pragma once

#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppgfp/autodiff.hpp"
#include "ppgfp/tensor.hpp"

namespace ppgfp::ssm {

/// Below this |dt * A| the input matrix uses the series limit B_bar = dt * B.
inline constexpr double kLimitThreshold = 1e-8;
/// Real parts of A are kept at or below -kMinDecay after every update.
inline constexpr double kMinDecay = 1e-4;

struct Discretized {
  ComplexVector a_bar;
  ComplexVector b_bar;
};

/// Zero-order-hold discretization of a diagonal continuous system:
/// a_bar = exp(dt*A), b_bar = (exp(dt*A) - 1) / A * B.
Discretized discretize(double dt, const ComplexVector& a, const ComplexVector& b);

/// Diagonal SSM parameters for one layer, one entry per channel.
struct LayerParams {
  std::vector<double> dt;
  std::vector<ComplexVector> a;
  std::vector<ComplexVector> b;
  std::vector<ComplexVector> c;

  std::size_t channels() const { return dt.size(); }
  std::size_t state_dim() const { return a.empty() ? 0 : a.front().size(); }
  void validate() const;
};

/// Sequential recurrence h_t = a_bar*h_{t-1} + b_bar*x_t, y_t = Re<C, h_t>, h_0 = 0.
std::vector<double> scan(const LayerParams& params, std::span<const double> x, std::size_t channel);

// ---- trainable encoder -------------------------------------------------------

enum class Activation { Gelu, Tanh };

struct EncoderConfig {
  std::size_t width = 128;      // d
  std::size_t state_dim = 64;   // d_h
  std::size_t blocks = 2;       // N
  std::size_t input_len = 300;  // raw scalars per sample
  std::size_t chunk = 1;        // raw scalars folded into one token
  double norm_eps = 1e-5;
  Activation activation = Activation::Gelu;

  std::size_t tokens() const { return input_len / chunk; }
  void validate() const;
};

/// Trainable SSM block parameters in their unconstrained form:
/// dt = exp(log_dt), Re(A) = -softplus(a_re), Im(A) = a_im.
struct BlockParams {
  ad::Parameter log_dt;  // [d]
  ad::Parameter a_re;    // [d, d_h]
  ad::Parameter a_im;
  ad::Parameter b_re;
  ad::Parameter b_im;
  ad::Parameter c_re;
  ad::Parameter c_im;
  ad::Parameter norm_gain;  // [d]
  ad::Parameter norm_bias;  // [d]
  ad::Parameter mix_w;      // [d, d]
  ad::Parameter mix_b;      // [d]

  LayerParams layer() const;
};

/// Tape primitive: applies one diagonal SSM layer to every channel of x [L, d].
/// `p` holds the bound (log_dt, a_re, a_im, b_re, b_im, c_re, c_im) parameters.
ad::Var ssm_layer(ad::Var x, std::span<const ad::Var, 7> p);

class Encoder {
 public:
  Encoder(std::string prefix, EncoderConfig cfg, std::mt19937_64& rng);

  const EncoderConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

  /// Shared affine map of each token (chunk scalars) to width d; input length must be input_len.
  ad::Var embed(ad::Tape& tape, std::span<const double> raw);
  ad::Var forward(ad::Tape& tape, ad::Var x);
  ad::Var encode(ad::Tape& tape, std::span<const double> raw) { return forward(tape, embed(tape, raw)); }

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::vector<BlockParams>& blocks() { return blocks_; }
  const std::vector<BlockParams>& blocks() const { return blocks_; }
  ad::Parameter& embed_w() { return embed_w_; }
  ad::Parameter& embed_b() { return embed_b_; }

  /// Clamps Re(A) to at most -kMinDecay. Returns how many entries were projected.
  std::size_t project_stable();

 private:
  std::string prefix_;
  EncoderConfig cfg_;
  ad::Parameter embed_w_;  // [chunk, d]
  ad::Parameter embed_b_;  // [d]
  std::vector<BlockParams> blocks_;
};

ad::Var activate(ad::Var x, Activation act);

/// Analytic floating-point operation count of one encoder forward pass
/// (embedding + blocks), counting a real multiply-add as 2 and a complex
/// multiply-add as 8.
double encoder_flops(const EncoderConfig& cfg);

}  // namespace ppgfp::ssm
