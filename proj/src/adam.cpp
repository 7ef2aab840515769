#include "ppgfp/adam.hpp"

#include <cmath>

#include "ppgfp/error.hpp"

namespace ppgfp::ad {

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) fail(ErrorKind::Config, "adam: learning rate must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    fail(ErrorKind::Config, "adam: betas must lie in [0, 1)");
  }
  if (!(cfg.eps > 0.0)) fail(ErrorKind::Config, "adam: eps must be positive");

  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) fail(ErrorKind::Dimension, "adam: state does not match parameter list");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      fail(ErrorKind::Dimension, "adam: shape mismatch for parameter " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace ppgfp::ad
