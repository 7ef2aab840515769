#include "ppgfp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "ppgfp/error.hpp"
#include "ppgfp/rng.hpp"
#include "ppgfp/trainer.hpp"

namespace ppgfp::ad {

namespace {

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

}  // namespace

double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradReport check_gradients(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& build,
                           double step, double floor) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    auto loss = build(tape);
    tape.backward(loss);
  }
  double gmax = 1.0;
  for (auto* p : params)
    for (double g : p->grad.data()) gmax = std::max(gmax, std::abs(g));
  const double scaled_floor = floor * gmax;
  auto eval = [&] {
    Tape tape;
    return build(tape).item();
  };
  GradReport rep;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double up = eval();
      p->value[i] = orig - step;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = rel_error(p->grad[i], numeric, scaled_floor);
      if (!std::isfinite(rel)) fail(ErrorKind::Numeric, "gradcheck: non-finite gradient in " + p->name);
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst = p->name + "[" + std::to_string(i) + "] " + fmt_g(p->grad[i]) + " " + fmt_g(numeric);
      }
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace ppgfp::ad

namespace ppgfp {

ModelConfig gradcheck_model() {
  ModelConfig c;
  c.enc_u = {8, 4, 1, 16, 1};
  c.enc_v = {8, 4, 1, 25, 1};
  c.heads = 2;
  return c;
}

ad::GradReport gradcheck_objective(const ModelConfig& cfg, std::uint64_t seed, std::size_t batch) {
  if (batch < 2) fail(ErrorKind::Config, "gradcheck: batch must hold a positive and a negative");
  if (cfg.variant != Variant::Fused) fail(ErrorKind::Config, "gradcheck: the full objective needs the fused variant");
  Model model(cfg, derive_seed(seed, 1));
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n_pos = (batch + 1) / 2;
  std::vector<std::vector<double>> beats(batch), fps(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    beats[i].resize(cfg.enc_u.input_len);
    fps[i].resize(cfg.enc_v.input_len);
    for (auto& x : beats[i]) x = unit(rng);
    for (auto& x : fps[i]) x = unit(rng);
  }
  std::vector<train::BatchItem> items;
  for (std::size_t i = 0; i < batch; ++i) items.push_back({beats[i], fps[i], i, i, i < n_pos});

  // Nonzero previous moments keep the spread term's normalization away from its floor.
  auto prev = loss::Moments::zeros(cfg.width());
  for (auto& x : prev.mu_u.data()) x = normal(rng);
  for (auto& x : prev.mu_v.data()) x = normal(rng);

  const loss::LossWeights w;
  const double pos_weight = double(batch - n_pos) / double(n_pos);
  return ad::check_gradients(model.parameters(), [&](ad::Tape& tape) {
    return train::batch_loss(model, tape, items, prev, w, pos_weight).total;
  });
}

}  // namespace ppgfp
