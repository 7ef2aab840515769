#include "ppgfp/losses.hpp"

#include <vector>

#include "ppgfp/error.hpp"

namespace ppgfp::loss {

void LossWeights::validate() const {
  if (!(tau > 0.0)) fail(ErrorKind::Config, "tau must be positive");
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
    fail(ErrorKind::Config, "EMA decays alpha and beta must lie in (0, 1)");
  }
  if (!(lambda_a >= 0.0) || !(lambda_s >= 0.0)) fail(ErrorKind::Config, "penalty factors must be non-negative");
}

namespace {

ad::Var contrast_term(ad::Var anchor, ad::Var positive, std::span<const ad::Var> negatives, double tau) {
  std::vector<ad::Var> logits;
  logits.reserve(negatives.size() + 1);
  const auto pos = ad::scale(ad::cosine(anchor, positive), 1.0 / tau);
  logits.push_back(pos);
  for (const auto& n : negatives) logits.push_back(ad::scale(ad::cosine(anchor, n), 1.0 / tau));
  return ad::sub(pos, ad::log_sum_exp(logits));
}

}  // namespace

ad::Var alignment_loss(ad::Var mu_u, ad::Var mu_v, std::span<const ad::Var> neg_u, std::span<const ad::Var> neg_v,
                       double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::Config, "alignment_loss: tau must be positive");
  const auto t1 = contrast_term(mu_u, mu_v, neg_v, tau);
  const auto t2 = contrast_term(mu_v, mu_u, neg_u, tau);
  return ad::scale(ad::add(t1, t2), -1.0);
}

ad::Var spread_loss(std::span<const ad::Var> pos_u, std::span<const ad::Var> pos_v, ad::Var mu_u, ad::Var mu_v) {
  if (pos_u.size() != pos_v.size() || pos_u.empty()) {
    fail(ErrorKind::Dimension, "spread_loss: need matching, non-empty positive sets");
  }
  auto nu = ad::sq_norm(mu_u);
  auto nv = ad::sq_norm(mu_v);
  if (nu.item() < kMomentFloor * kMomentFloor || nv.item() < kMomentFloor * kMomentFloor) {
    fail(ErrorKind::Numeric, "spread_loss: moment norm below floor");
  }
  ad::Var acc_u = ad::sq_norm(ad::sub(pos_u[0], mu_u));
  ad::Var acc_v = ad::sq_norm(ad::sub(pos_v[0], mu_v));
  for (std::size_t j = 1; j < pos_u.size(); ++j) {
    acc_u = ad::add(acc_u, ad::sq_norm(ad::sub(pos_u[j], mu_u)));
    acc_v = ad::add(acc_v, ad::sq_norm(ad::sub(pos_v[j], mu_v)));
  }
  return ad::add(ad::div_scalar(acc_u, nu), ad::div_scalar(acc_v, nv));
}

Tensor ema_update(const Tensor& mu_prev, const Tensor& batch_mean, double decay) {
  if (mu_prev.size() != batch_mean.size()) fail(ErrorKind::Dimension, "ema_update: length mismatch");
  Tensor out = mu_prev;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decay * mu_prev[i] + (1.0 - decay) * batch_mean[i];
  return out;
}

ad::Var ema_update(ad::Tape& tape, const Tensor& mu_prev, ad::Var batch_mean, double decay) {
  if (mu_prev.size() != batch_mean.value().size()) fail(ErrorKind::Dimension, "ema_update: length mismatch");
  Tensor history = mu_prev.reshaped(batch_mean.shape());
  for (auto& v : history.storage()) v *= decay;
  return ad::add(tape.constant(std::move(history)), ad::scale(batch_mean, 1.0 - decay));
}

ad::Var batch_mean(std::span<const ad::Var> latents) { return ad::mean_rows(ad::stack_rows(latents)); }

ad::Var total_loss(ad::Var l_c, ad::Var l_a, ad::Var l_s, const LossWeights& w) {
  return ad::add(l_c, ad::add(ad::scale(l_a, w.lambda_a), ad::scale(l_s, w.lambda_s)));
}

}  // namespace ppgfp::loss
