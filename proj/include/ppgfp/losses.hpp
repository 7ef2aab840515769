#pragma once

#include <span>

#include "ppgfp/autodiff.hpp"

namespace ppgfp::loss {

struct LossWeights {
  double tau = 0.1;
  double alpha = 0.9;
  double beta = 0.9;
  double lambda_a = 0.8;
  double lambda_s = 0.05;

  void validate() const;
};

/// First-moment estimates carried across batches and epochs; zero at start.
struct Moments {
  Tensor mu_u;
  Tensor mu_v;

  static Moments zeros(std::size_t width) { return {Tensor({1, width}), Tensor({1, width})}; }
};

/// Norm floor below which a moment cannot normalize the spread term.
inline constexpr double kMomentFloor = 1e-6;

/// Negated InfoNCE over the moments. Term one contrasts sim(mu_u, mu_v)
/// against sim(mu_u, v-) over negative v-latents, term two mirrors it over
/// negative u-latents. sim is cosine similarity scaled by 1/tau.
ad::Var alignment_loss(ad::Var mu_u, ad::Var mu_v, std::span<const ad::Var> neg_u, std::span<const ad::Var> neg_v,
                       double tau);

/// Sum over positive pairs of |u - mu_u|^2/|mu_u|^2 + |v - mu_v|^2/|mu_v|^2.
ad::Var spread_loss(std::span<const ad::Var> pos_u, std::span<const ad::Var> pos_v, ad::Var mu_u, ad::Var mu_v);

/// mu <- decay * mu_prev + (1 - decay) * batch_mean on plain values.
Tensor ema_update(const Tensor& mu_prev, const Tensor& batch_mean, double decay);

/// Same recursion on the tape: the history is a constant, the batch mean
/// carries gradient.
ad::Var ema_update(ad::Tape& tape, const Tensor& mu_prev, ad::Var batch_mean, double decay);

/// Row-mean of equal-length latents, [1, d].
ad::Var batch_mean(std::span<const ad::Var> latents);

ad::Var total_loss(ad::Var l_c, ad::Var l_a, ad::Var l_s, const LossWeights& w);

}  // namespace ppgfp::loss
