#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "ppgfp/error.hpp"
#include "ppgfp/ssm.hpp"
#include "support/gradcheck.hpp"

using namespace ppgfp;
using namespace ppgfp::ssm;
using cplx = std::complex<double>;

namespace {

ComplexVector cv(std::initializer_list<cplx> xs) {
  ComplexVector out(xs.size());
  std::size_t i = 0;
  for (auto x : xs) out.set(i++, x);
  return out;
}

LayerParams random_layer(std::size_t d, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.05, 2.0);
  LayerParams lp;
  for (std::size_t k = 0; k < d; ++k) {
    lp.dt.push_back(pos(rng) * 0.5);
    ComplexVector a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a.set(i, {-pos(rng), 3.0 * u(rng)});
      b.set(i, {u(rng), u(rng)});
      c.set(i, {u(rng), u(rng)});
    }
    lp.a.push_back(a);
    lp.b.push_back(b);
    lp.c.push_back(c);
  }
  return lp;
}

}  // namespace

TEST_CASE("discretize closed forms") {
  auto r = discretize(std::numbers::ln2, cv({-1.0}), cv({1.0}));
  CHECK(std::abs(r.a_bar[0] - cplx(0.5, 0.0)) < 1e-12);
  CHECK(std::abs(r.b_bar[0] - cplx(0.5, 0.0)) < 1e-12);

  auto lim = discretize(0.1, cv({cplx(-1e-12, 1e-12)}), cv({1.0}));
  CHECK(std::abs(lim.b_bar[0] - cplx(0.1, 0.0)) < 1e-12);

  const double dt = 0.3;
  auto rot = discretize(dt, cv({cplx(0.0, std::numbers::pi / dt)}), cv({1.0}));
  CHECK(std::abs(rot.a_bar[0] - cplx(-1.0, 0.0)) < 1e-12);
  CHECK(std::abs(std::abs(rot.b_bar[0]) - 2.0 * dt / std::numbers::pi) < 1e-12);

  CHECK_THROWS_AS(discretize(0.0, cv({-1.0}), cv({1.0})), Error);
  try {
    discretize(-1.0, cv({-1.0}), cv({1.0}));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("discretize agrees with first-order Taylor expansion at small step") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double dt = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const cplx a(-std::abs(u(rng)) - 0.01, u(rng));
    const cplx b(u(rng), u(rng));
    auto r = discretize(dt, cv({a}), cv({b}));
    CHECK(std::abs(r.a_bar[0] - (1.0 + dt * a)) < 1e-9);
    CHECK(std::abs(r.b_bar[0] - dt * b) < 1e-9);
  }
}

TEST_CASE("discretize is continuous across the series branches") {
  // Compare against the direct formula where it is well conditioned.
  for (double mag : {5e-4, 9.99e-4, 1.001e-3, 2e-3}) {
    const double dt = 0.5;
    const cplx a = cplx(-0.6, 0.8) * (mag / dt);
    auto r = discretize(dt, cv({a}), cv({1.0}));
    const long double zr = dt * a.real(), zi = dt * a.imag();
    const std::complex<long double> z(zr, zi);
    const auto direct = (std::exp(z) - 1.0L) / std::complex<long double>(a.real(), a.imag());
    CHECK(std::abs(r.b_bar[0] - cplx(static_cast<double>(direct.real()), static_cast<double>(direct.imag()))) <
          1e-14);
  }
}

TEST_CASE("scan examples") {
  std::mt19937_64 rng(2);
  auto lp = random_layer(3, 4, rng);
  lp.validate();
  std::vector<double> zeros(20, 0.0);
  for (double y : scan(lp, zeros, 1)) CHECK(y == 0.0);

  std::vector<double> impulse(64, 0.0);
  impulse[0] = 1.0;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    auto y = scan(lp, impulse, ch);
    auto disc = discretize(lp.dt[ch], lp.a[ch], lp.b[ch]);
    for (std::size_t t = 0; t < 64; ++t) {
      cplx k = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        k += lp.c[ch][i] * std::pow(disc.a_bar[i], static_cast<double>(t)) * disc.b_bar[i];
      }
      CHECK(std::abs(y[t] - k.real()) < 1e-10);
    }
  }

  CHECK_THROWS_AS(scan(lp, zeros, 3), Error);
}

TEST_CASE("scan obeys the geometric-series bound") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto lp = random_layer(1, 5, rng);
    auto disc = discretize(lp.dt[0], lp.a[0], lp.b[0]);
    double cn = 0.0, bn = 0.0, amax = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      cn += std::norm(lp.c[0][i]);
      bn += std::norm(disc.b_bar[i]);
      amax = std::max(amax, std::abs(disc.a_bar[i]));
    }
    std::vector<double> x(200);
    for (auto& v : x) v = u(rng);
    double sup = 0.0;
    for (double v : x) sup = std::max(sup, std::abs(v));
    const double bound = std::sqrt(cn) * std::sqrt(bn) * sup / (1.0 - amax);
    for (double y : scan(lp, x, 0)) CHECK(std::abs(y) <= bound);
  }
}

TEST_CASE("scan matches an unrolled matrix recurrence") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto lp = random_layer(2, 6, rng);
    std::vector<double> x(16);
    for (auto& v : x) v = u(rng);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      auto disc = discretize(lp.dt[ch], lp.a[ch], lp.b[ch]);
      Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(6, 6);
      Eigen::VectorXcd B(6), C(6), h = Eigen::VectorXcd::Zero(6);
      for (int i = 0; i < 6; ++i) {
        A(i, i) = disc.a_bar[i];
        B(i) = disc.b_bar[i];
        C(i) = lp.c[ch][i];
      }
      auto y = scan(lp, x, ch);
      for (std::size_t t = 0; t < 16; ++t) {
        h = A * h + B * x[t];
        const double want = (C.transpose() * h)(0).real();
        CHECK(std::abs(y[t] - want) < 1e-10);
      }
    }
  }
}

TEST_CASE("ssm_layer forward equals scan per channel") {
  std::mt19937_64 rng(5);
  EncoderConfig cfg{4, 3, 1, 8, 1};
  Encoder enc("enc", cfg, rng);
  auto& bp = enc.blocks()[0];
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto* p : {&bp.a_re, &bp.a_im, &bp.b_re, &bp.b_im}) {
    for (auto& v : p->value.storage()) v += 0.3 * n(rng);
  }
  Tensor x({8, 4});
  for (auto& v : x.storage()) v = n(rng);

  ad::Tape tape;
  std::array<ad::Var, 7> sv{tape.parameter(bp.log_dt), tape.parameter(bp.a_re), tape.parameter(bp.a_im),
                            tape.parameter(bp.b_re),   tape.parameter(bp.b_im), tape.parameter(bp.c_re),
                            tape.parameter(bp.c_im)};
  auto y = ssm_layer(tape.constant(x), sv).value();
  auto lp = bp.layer();
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> col(8);
    for (std::size_t t = 0; t < 8; ++t) col[t] = x(t, k);
    auto want = scan(lp, col, k);
    for (std::size_t t = 0; t < 8; ++t) CHECK(std::abs(y(t, k) - want[t]) < 1e-12);
  }
}

TEST_CASE("ssm_layer gradients match central differences") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  EncoderConfig cfg{4, 3, 1, 8, 1};
  Encoder enc("enc", cfg, rng);
  auto& bp = enc.blocks()[0];
  for (auto* p : {&bp.a_re, &bp.a_im, &bp.b_re, &bp.b_im, &bp.c_re, &bp.c_im}) {
    for (auto& v : p->value.storage()) v += 0.5 * n(rng);
  }
  // One channel with a tiny step exercises the series branch.
  bp.log_dt.value[0] = -9.0;
  for (std::size_t i = 0; i < 3; ++i) bp.a_im.value(0, i) = 0.1 * static_cast<double>(i);
  ad::Parameter xin("x", Tensor({8, 4}));
  for (auto& v : xin.value.storage()) v = n(rng);
  Tensor w({8, 4});
  for (auto& v : w.storage()) v = n(rng);

  std::vector<ad::Parameter*> ps{&xin, &bp.log_dt, &bp.a_re, &bp.a_im, &bp.b_re, &bp.b_im, &bp.c_re, &bp.c_im};
  auto rep = testing::check_gradients(ps, [&](ad::Tape& t) {
    std::array<ad::Var, 7> sv{t.parameter(bp.log_dt), t.parameter(bp.a_re), t.parameter(bp.a_im),
                              t.parameter(bp.b_re),   t.parameter(bp.b_im), t.parameter(bp.c_re),
                              t.parameter(bp.c_im)};
    return ad::dot(ssm_layer(t.parameter(xin), sv), t.constant(w));
  });
  CHECK(rep.checked == 32 + 4 + 6 * 12);
  CAPTURE(rep.worst);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("encoder embedding examples") {
  std::mt19937_64 rng(7);
  EncoderConfig cfg{5, 2, 1, 6, 1};
  Encoder enc("enc_u", cfg, rng);
  ad::Tape tape;
  std::vector<double> zeros(6, 0.0), ones(6, 1.0);
  auto z = enc.embed(tape, zeros).value();
  for (double v : z.data()) CHECK(v == 0.0);

  for (std::size_t k = 0; k < 5; ++k) enc.embed_b().value[k] = 0.1 * static_cast<double>(k);
  auto o = enc.embed(tape, ones).value();
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t k = 0; k < 5; ++k) CHECK(o(r, k) == enc.embed_w().value(0, k) + enc.embed_b().value[k]);

  auto alt = ones;
  alt[3] = -2.0;
  auto a = enc.embed(tape, alt).value();
  for (std::size_t r = 0; r < 6; ++r) {
    bool same = true;
    for (std::size_t k = 0; k < 5; ++k) same = same && a(r, k) == o(r, k);
    CHECK(same == (r != 3));
  }

  std::vector<double> wrong(7, 0.0);
  try {
    enc.embed(tape, wrong);
    FAIL("expected input error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Input);
  }
}

TEST_CASE("chunked embedding folds consecutive scalars into one token") {
  std::mt19937_64 rng(8);
  EncoderConfig cfg{3, 2, 1, 6, 2};
  Encoder enc("enc_v", cfg, rng);
  ad::Tape tape;
  std::vector<double> raw{1, 2, 3, 4, 5, 6};
  auto e = enc.embed(tape, raw).value();
  CHECK(e.rows() == 3);
  const auto& w = enc.embed_w().value;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(std::abs(e(r, k) - (raw[2 * r] * w(0, k) + raw[2 * r + 1] * w(1, k))) < 1e-14);
}

TEST_CASE("encoder with zeroed mixing is the identity") {
  std::mt19937_64 rng(9);
  EncoderConfig cfg{6, 4, 2, 10, 1};
  Encoder enc("enc", cfg, rng);
  for (auto& bp : enc.blocks()) {
    for (auto& v : bp.mix_w.value.storage()) v = 0.0;
    for (auto& v : bp.mix_b.value.storage()) v = 0.0;
  }
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor x({10, 6});
  for (auto& v : x.storage()) v = n(rng);
  ad::Tape tape;
  auto y = enc.forward(tape, tape.constant(x)).value();
  CHECK(y == x);

  ad::Tape t2;
  CHECK_THROWS_AS(enc.forward(t2, t2.constant(Tensor({10, 5}))), Error);
}

TEST_CASE("two shared blocks equal direct composition of one block") {
  std::mt19937_64 rng(10);
  EncoderConfig one{6, 4, 1, 10, 1};
  EncoderConfig two{6, 4, 2, 10, 1};
  Encoder e1("a", one, rng);
  Encoder e2("b", two, rng);
  auto src = e1.blocks()[0];
  e2.blocks()[0] = src;
  e2.blocks()[1] = src;
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor x({10, 6});
  for (auto& v : x.storage()) v = n(rng);

  ad::Tape tape;
  auto once = e1.forward(tape, tape.constant(x));
  auto twice = e1.forward(tape, once).value();
  auto stacked = e2.forward(tape, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(twice[i] - stacked[i]) < 1e-12);
  CHECK_FALSE(once.value() == twice);
}

TEST_CASE("encoder preserves shape and its gradients match central differences") {
  std::mt19937_64 rng(11);
  EncoderConfig cfg{4, 3, 2, 8, 1};
  Encoder enc("enc", cfg, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> raw(8);
  for (auto& v : raw) v = n(rng);
  for (auto& v : enc.blocks()[1].norm_bias.value.storage()) v = 0.1 * n(rng);
  Tensor w({8, 4});
  for (auto& v : w.storage()) v = n(rng);

  {
    ad::Tape tape;
    auto y = enc.encode(tape, raw);
    CHECK(y.shape() == Shape{8, 4});
  }
  auto rep = testing::check_gradients(enc.parameters(), [&](ad::Tape& t) {
    return ad::dot(enc.encode(t, raw), t.constant(w));
  });
  CAPTURE(rep.worst);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("stability projection keeps every decay strictly negative") {
  std::mt19937_64 rng(12);
  Encoder enc("enc", EncoderConfig{4, 3, 1, 8, 1}, rng);
  auto& a_re = enc.blocks()[0].a_re.value;
  a_re(0, 0) = -40.0;
  a_re(1, 2) = -12.0;
  CHECK(enc.project_stable() == 2);
  auto lp = enc.blocks()[0].layer();
  for (std::size_t k = 0; k < lp.channels(); ++k) {
    auto disc = discretize(lp.dt[k], lp.a[k], lp.b[k]);
    for (std::size_t i = 0; i < lp.state_dim(); ++i) {
      CHECK(lp.a[k].re[i] <= -kMinDecay * (1.0 - 1e-9));
      CHECK(std::abs(disc.a_bar[i]) < 1.0);
    }
  }
  CHECK(enc.project_stable() == 0);
}

TEST_CASE("flop count scales linearly in sequence length") {
  EncoderConfig a{16, 8, 2, 100, 1};
  EncoderConfig b{16, 8, 2, 200, 1};
  const double fa = encoder_flops(a), fb = encoder_flops(b);
  // Only the discretization term is length independent.
  const double fixed = 2.0 * 30.0 * 16 * 8;
  CHECK(std::abs((fb - fixed) - 2.0 * (fa - fixed)) < 1e-6);
}
