#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ppgfp/autodiff.hpp"
#include "ppgfp/model.hpp"

namespace ppgfp::ad {

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "name[index] analytic numeric" of the largest error
};

/// |a - n| / max(|a|, |n|, floor).
double rel_error(double analytic, double numeric, double floor = 1e-6);

/// Compares tape gradients of `build` against central differences for every
/// entry of every parameter. `build` must record a scalar loss on the tape.
/// The denominator floor is `floor * max(1, max|grad|)`, so entries far below
/// the gradient's overall scale are judged against that scale rather than
/// against finite-difference rounding noise.
GradReport check_gradients(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& build,
                           double step = 1e-5, double floor = 1e-6);

}  // namespace ppgfp::ad

namespace ppgfp {

/// d=8, d_h=4, N=1, h=2, PPG length 16, fingerprint length 25, one scalar per token.
ModelConfig gradcheck_model();

/// Gradient check of the full training objective (classification, alignment
/// and spread with EMA moments) for a batch of 2 positives and 2 negatives
/// on random inputs and random previous moments.
ad::GradReport gradcheck_objective(const ModelConfig& cfg, std::uint64_t seed, std::size_t batch = 4);

}  // namespace ppgfp
