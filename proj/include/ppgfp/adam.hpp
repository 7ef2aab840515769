#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ppgfp/autodiff.hpp"

namespace ppgfp::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// State buffers are created on the first call and must match afterwards.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg);

}  // namespace ppgfp::ad
