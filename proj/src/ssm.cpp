#include "ppgfp/ssm.hpp"

#include <cmath>
#include <numbers>

#include "ppgfp/error.hpp"

namespace ppgfp::ssm {

namespace {

using cplx = std::complex<double>;

/// exp(z) - 1 without cancellation for small |z|.
cplx expm1c(cplx z) {
  const double s = std::sin(0.5 * z.imag());
  const double re = std::expm1(z.real()) * std::cos(z.imag()) - 2.0 * s * s;
  const double im = std::exp(z.real()) * std::sin(z.imag());
  return {re, im};
}

/// a_bar = exp(dt*A), e = (exp(dt*A)-1)/A and de/dA for the ZOH input matrix.
struct Zoh {
  cplx a_bar;
  cplx e;
  cplx de_da;
};

Zoh zoh(double dt, cplx a) {
  const cplx z = dt * a;
  const cplx a_bar = std::exp(z);
  const double mag = std::abs(z);
  if (mag < kLimitThreshold) return {a_bar, cplx(dt, 0.0), cplx(0.5 * dt * dt, 0.0)};
  if (mag < 1e-3) {
    const cplx e = dt * (1.0 + z * (1.0 / 2 + z * (1.0 / 6 + z * (1.0 / 24 + z / 120.0))));
    const cplx de = dt * dt * (1.0 / 2 + z * (1.0 / 3 + z * (1.0 / 8 + z * (1.0 / 30 + z / 144.0))));
    return {a_bar, e, de};
  }
  const cplx e = expm1c(z) / a;
  return {a_bar, e, (dt * a_bar - e) / a};
}

double inv_softplus(double y) { return std::log(std::expm1(y)); }

ad::Parameter make_param(const std::string& name, Shape shape) { return ad::Parameter(name, Tensor(std::move(shape))); }

}  // namespace

Discretized discretize(double dt, const ComplexVector& a, const ComplexVector& b) {
  if (!(dt > 0.0)) fail(ErrorKind::Config, "discretize: step must be positive");
  if (a.size() != b.size()) fail(ErrorKind::Dimension, "discretize: A and B lengths differ");
  Discretized out{ComplexVector(a.size()), ComplexVector(a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Zoh z = zoh(dt, a[i]);
    out.a_bar.set(i, z.a_bar);
    out.b_bar.set(i, z.e * b[i]);
  }
  return out;
}

void LayerParams::validate() const {
  const auto d = dt.size();
  if (a.size() != d || b.size() != d || c.size() != d) fail(ErrorKind::Dimension, "ssm params: channel count mismatch");
  const auto n = state_dim();
  for (std::size_t k = 0; k < d; ++k) {
    if (!(dt[k] > 0.0)) fail(ErrorKind::Config, "ssm params: step must be positive");
    if (a[k].size() != n || b[k].size() != n || c[k].size() != n) {
      fail(ErrorKind::Dimension, "ssm params: state dimension mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(a[k].re[i] < 0.0)) fail(ErrorKind::Config, "ssm params: Re(A) must be negative");
    }
  }
}

std::vector<double> scan(const LayerParams& params, std::span<const double> x, std::size_t channel) {
  if (channel >= params.channels()) fail(ErrorKind::Dimension, "scan: channel out of range");
  const auto disc = discretize(params.dt[channel], params.a[channel], params.b[channel]);
  const auto& cv = params.c[channel];
  const auto n = cv.size();
  std::vector<double> hr(n, 0.0), hi(n, 0.0), y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ar = disc.a_bar.re[i], ai = disc.a_bar.im[i];
      const double nr = ar * hr[i] - ai * hi[i] + disc.b_bar.re[i] * x[t];
      const double ni = ar * hi[i] + ai * hr[i] + disc.b_bar.im[i] * x[t];
      hr[i] = nr;
      hi[i] = ni;
      acc += cv.re[i] * nr - cv.im[i] * ni;
    }
    y[t] = acc;
  }
  return y;
}

void EncoderConfig::validate() const {
  if (width == 0 || state_dim == 0 || blocks == 0 || input_len == 0 || chunk == 0) {
    fail(ErrorKind::Config, "encoder config: all extents must be positive");
  }
  if (input_len % chunk != 0) fail(ErrorKind::Config, "encoder config: chunk must divide the input length");
  if (!(norm_eps > 0.0)) fail(ErrorKind::Config, "encoder config: norm_eps must be positive");
}

LayerParams BlockParams::layer() const {
  LayerParams lp;
  const auto d = log_dt.value.size();
  const auto n = a_re.value.cols();
  for (std::size_t k = 0; k < d; ++k) {
    lp.dt.push_back(std::exp(log_dt.value[k]));
    ComplexVector a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a.set(i, {-ad::softplus(a_re.value(k, i)), a_im.value(k, i)});
      b.set(i, {b_re.value(k, i), b_im.value(k, i)});
      c.set(i, {c_re.value(k, i), c_im.value(k, i)});
    }
    lp.a.push_back(std::move(a));
    lp.b.push_back(std::move(b));
    lp.c.push_back(std::move(c));
  }
  return lp;
}

ad::Var ssm_layer(ad::Var x, std::span<const ad::Var, 7> p) {
  const auto& X = x.value();
  const auto L = X.rows(), d = X.cols();
  const auto& log_dt = p[0].value();
  const auto n = p[1].value().cols();
  if (log_dt.size() != d || p[1].value().rows() != d) {
    fail(ErrorKind::Dimension, "ssm_layer: parameter channels do not match input width");
  }
  for (std::size_t k = 1; k < 7; ++k) {
    if (p[k].value().rows() != d || p[k].value().cols() != n) fail(ErrorKind::Dimension, "ssm_layer: bad parameter shape");
  }

  Tensor Y({L, d});
  std::vector<double> hr(n), hi(n), abr(n), abi(n), bbr(n), bbi(n);
  const auto &are = p[1].value(), &aim = p[2].value(), &bre = p[3].value(), &bim = p[4].value(),
             &cre = p[5].value(), &cim = p[6].value();
  for (std::size_t k = 0; k < d; ++k) {
    const double dt = std::exp(log_dt[k]);
    for (std::size_t i = 0; i < n; ++i) {
      const Zoh z = zoh(dt, {-ad::softplus(are(k, i)), aim(k, i)});
      const cplx bb = z.e * cplx(bre(k, i), bim(k, i));
      abr[i] = z.a_bar.real();
      abi[i] = z.a_bar.imag();
      bbr[i] = bb.real();
      bbi[i] = bb.imag();
      hr[i] = hi[i] = 0.0;
    }
    const double* cr = cre.data().data() + k * n;
    const double* ci = cim.data().data() + k * n;
    for (std::size_t t = 0; t < L; ++t) {
      const double xt = X[t * d + k];
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double nr = abr[i] * hr[i] - abi[i] * hi[i] + bbr[i] * xt;
        const double ni = abr[i] * hi[i] + abi[i] * hr[i] + bbi[i] * xt;
        hr[i] = nr;
        hi[i] = ni;
        acc += cr[i] * nr - ci[i] * ni;
      }
      Y[t * d + k] = acc;
    }
  }

  std::array<ad::Var, 8> inputs{x, p[0], p[1], p[2], p[3], p[4], p[5], p[6]};
  return x.tape->push(std::move(Y), inputs, [L, d, n](const ad::BackwardArgs& g) {
    const auto& X = g.input(0);
    const auto &log_dt = g.input(1), &are = g.input(2), &aim = g.input(3), &bre = g.input(4), &bim = g.input(5),
               &cre = g.input(6), &cim = g.input(7);
    const auto& gy = g.out_grad;
    // States are recomputed per channel so memory stays O(L * d_h).
    std::vector<double> Hr(L * n), Hi(L * n);
    std::vector<cplx> abar(n), bbar(n), e(n), de(n), a(n), gab(n), gbb(n), gc(n), G(n);
    for (std::size_t k = 0; k < d; ++k) {
      const double dt = std::exp(log_dt[k]);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = {-ad::softplus(are(k, i)), aim(k, i)};
        const Zoh z = zoh(dt, a[i]);
        abar[i] = z.a_bar;
        e[i] = z.e;
        de[i] = z.de_da;
        bbar[i] = z.e * cplx(bre(k, i), bim(k, i));
        gab[i] = gbb[i] = gc[i] = G[i] = 0.0;
      }
      for (std::size_t i = 0; i < n; ++i) {
        double hr = 0.0, hi = 0.0;
        const double ar = abar[i].real(), ai = abar[i].imag(), br = bbar[i].real(), bi = bbar[i].imag();
        for (std::size_t t = 0; t < L; ++t) {
          const double xt = X[t * d + k];
          const double nr = ar * hr - ai * hi + br * xt;
          const double ni = ar * hi + ai * hr + bi * xt;
          hr = nr;
          hi = ni;
          Hr[t * n + i] = hr;
          Hi[t * n + i] = hi;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double ar = abar[i].real(), ai = -abar[i].imag();  // conj(a_bar)
        const double cr = cre(k, i), ci = -cim(k, i);             // conj(C)
        const double br = bbar[i].real(), bi = bbar[i].imag();
        double Gr = 0.0, Gi = 0.0;
        double gabr = 0.0, gabi = 0.0, gbbr = 0.0, gbbi = 0.0, gcr = 0.0, gci = 0.0;
        for (std::size_t t = L; t-- > 0;) {
          const double gyt = gy[t * d + k];
          const double nGr = gyt * cr + ar * Gr - ai * Gi;
          const double nGi = gyt * ci + ar * Gi + ai * Gr;
          Gr = nGr;
          Gi = nGi;
          const double hr = Hr[t * n + i], hi = Hi[t * n + i];
          gcr += gyt * hr;
          gci -= gyt * hi;
          if (t > 0) {
            const double pr = Hr[(t - 1) * n + i], pi = -Hi[(t - 1) * n + i];
            gabr += pr * Gr - pi * Gi;
            gabi += pr * Gi + pi * Gr;
          }
          const double xt = X[t * d + k];
          gbbr += xt * Gr;
          gbbi += xt * Gi;
          if (g.in_grads[0]) (*g.in_grads[0])[t * d + k] += br * Gr + bi * Gi;
        }
        gab[i] = {gabr, gabi};
        gbb[i] = {gbbr, gbbi};
        gc[i] = {gcr, gci};
      }
      double g_dt = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const cplx b(bre(k, i), bim(k, i));
        cplx ga = std::conj(dt * abar[i]) * gab[i];
        g_dt += (std::conj(a[i] * abar[i]) * gab[i]).real();
        const cplx ge = std::conj(b) * gbb[i];
        ga += std::conj(de[i]) * ge;
        g_dt += (std::conj(abar[i]) * ge).real();
        const cplx gb = std::conj(e[i]) * gbb[i];
        if (g.in_grads[2]) (*g.in_grads[2])(k, i) += -ad::sigmoid(are(k, i)) * ga.real();
        if (g.in_grads[3]) (*g.in_grads[3])(k, i) += ga.imag();
        if (g.in_grads[4]) (*g.in_grads[4])(k, i) += gb.real();
        if (g.in_grads[5]) (*g.in_grads[5])(k, i) += gb.imag();
        if (g.in_grads[6]) (*g.in_grads[6])(k, i) += gc[i].real();
        if (g.in_grads[7]) (*g.in_grads[7])(k, i) += gc[i].imag();
      }
      if (g.in_grads[1]) (*g.in_grads[1])[k] += dt * g_dt;
    }
  });
}

ad::Var activate(ad::Var x, Activation act) {
  if (act == Activation::Gelu) return ad::gelu(x);
  Tensor out = x.value();
  for (auto& v : out.storage()) v = std::tanh(v);
  return x.tape->push(std::move(out), {x}, [](const ad::BackwardArgs& g) {
    auto& gx = *g.in_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g.out_grad[i] * (1.0 - g.output[i] * g.output[i]);
  });
}

Encoder::Encoder(std::string prefix, EncoderConfig cfg, std::mt19937_64& rng)
    : prefix_(std::move(prefix)), cfg_(cfg) {
  cfg_.validate();
  const auto d = cfg_.width, n = cfg_.state_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  embed_w_ = make_param(prefix_ + ".embed.w", {cfg_.chunk, d});
  embed_b_ = make_param(prefix_ + ".embed.b", {d});
  const double ew = 1.0 / std::sqrt(static_cast<double>(cfg_.chunk));
  for (auto& v : embed_w_.value.storage()) v = normal(rng) * ew;

  const double a_re0 = inv_softplus(0.5);
  const double c_scale = std::sqrt(0.5 / static_cast<double>(n));
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t blk = 0; blk < cfg_.blocks; ++blk) {
    const std::string base = prefix_ + ".block" + std::to_string(blk) + ".";
    BlockParams bp{
        make_param(base + "ssm.log_dt", {d}),   make_param(base + "ssm.a_re", {d, n}),
        make_param(base + "ssm.a_im", {d, n}),  make_param(base + "ssm.b_re", {d, n}),
        make_param(base + "ssm.b_im", {d, n}),  make_param(base + "ssm.c_re", {d, n}),
        make_param(base + "ssm.c_im", {d, n}),  make_param(base + "norm.gain", {d}),
        make_param(base + "norm.bias", {d}),    make_param(base + "mix.w", {d, d}),
        make_param(base + "mix.b", {d}),
    };
    const double lo = std::log(1e-3), hi = std::log(1e-1);
    for (auto& v : bp.log_dt.value.storage()) v = lo + unif(rng) * (hi - lo);
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        bp.a_re.value(k, i) = a_re0;
        bp.a_im.value(k, i) = std::numbers::pi * static_cast<double>(i);
        bp.b_re.value(k, i) = 1.0;
        bp.c_re.value(k, i) = normal(rng) * c_scale;
        bp.c_im.value(k, i) = normal(rng) * c_scale;
      }
    }
    for (auto& v : bp.norm_gain.value.storage()) v = 1.0;
    for (auto& v : bp.mix_w.value.storage()) v = normal(rng) * mix_scale;
    blocks_.push_back(std::move(bp));
  }
}

ad::Var Encoder::embed(ad::Tape& tape, std::span<const double> raw) {
  if (raw.size() != cfg_.input_len) {
    fail(ErrorKind::Input, prefix_ + ": expected input of length " + std::to_string(cfg_.input_len) + ", got " +
                               std::to_string(raw.size()));
  }
  Tensor tokens({cfg_.tokens(), cfg_.chunk}, std::vector<double>(raw.begin(), raw.end()));
  auto x = tape.constant(std::move(tokens));
  auto w = tape.parameter(embed_w_);
  auto b = tape.parameter(embed_b_);
  return ad::add_row(ad::matmul(x, w), b);
}

ad::Var Encoder::forward(ad::Tape& tape, ad::Var x) {
  if (x.value().cols() != cfg_.width) {
    fail(ErrorKind::Dimension, prefix_ + ": input width " + std::to_string(x.value().cols()) + " != " +
                                   std::to_string(cfg_.width));
  }
  auto bind = [&tape](ad::Parameter& p) { return tape.parameter(p); };
  for (auto& bp : blocks_) {
    auto h = ad::layer_norm(x, bind(bp.norm_gain), bind(bp.norm_bias), cfg_.norm_eps);
    const std::array<ad::Var, 7> sv{bind(bp.log_dt), bind(bp.a_re), bind(bp.a_im), bind(bp.b_re),
                                    bind(bp.b_im),   bind(bp.c_re), bind(bp.c_im)};
    h = ssm_layer(h, sv);
    h = activate(h, cfg_.activation);
    h = ad::add_row(ad::matmul(h, bind(bp.mix_w)), bind(bp.mix_b));
    x = ad::add(x, h);
  }
  return x;
}

std::vector<ad::Parameter*> Encoder::parameters() {
  std::vector<ad::Parameter*> out{&embed_w_, &embed_b_};
  for (auto& bp : blocks_) {
    for (auto* p : {&bp.log_dt, &bp.a_re, &bp.a_im, &bp.b_re, &bp.b_im, &bp.c_re, &bp.c_im, &bp.norm_gain,
                    &bp.norm_bias, &bp.mix_w, &bp.mix_b}) {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<const ad::Parameter*> Encoder::parameters() const {
  auto ps = const_cast<Encoder*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t Encoder::project_stable() {
  // Re(A) = -softplus(raw) <= -kMinDecay  <=>  raw >= softplus^-1(kMinDecay).
  const double floor_raw = inv_softplus(kMinDecay);
  std::size_t n = 0;
  for (auto& bp : blocks_) {
    for (auto& v : bp.a_re.value.storage()) {
      if (v < floor_raw) {
        v = floor_raw;
        ++n;
      }
    }
    for (auto& v : bp.log_dt.value.storage()) {
      if (!std::isfinite(v)) fail(ErrorKind::Numeric, "ssm step parameter became non-finite");
    }
  }
  return n;
}

double encoder_flops(const EncoderConfig& cfg) {
  const double L = static_cast<double>(cfg.tokens());
  const double d = static_cast<double>(cfg.width);
  const double n = static_cast<double>(cfg.state_dim);
  const double p = static_cast<double>(cfg.chunk);
  double total = 2.0 * L * p * d + L * d;  // embedding matmul + bias
  const double per_block = 5.0 * L * d          // layer norm
                           + 30.0 * d * n       // discretization
                           + 14.0 * L * d * n   // recurrence (5 + 5) + real-part readout (4)
                           + 8.0 * L * d        // activation
                           + 2.0 * L * d * d    // mixing
                           + 2.0 * L * d;       // mixing bias + residual
  total += static_cast<double>(cfg.blocks) * per_block;
  return total;
}

}  // namespace ppgfp::ssm
