#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "ppgfp/adam.hpp"
#include "ppgfp/autodiff.hpp"
#include "ppgfp/error.hpp"
#include "support/gradcheck.hpp"

using namespace ppgfp;
using namespace ppgfp::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("tensor rejects non-finite data and bad shapes") {
  CHECK_THROWS_AS(Tensor({2}, {1.0, NAN}), Error);
  CHECK_THROWS_AS(Tensor({2}, {1.0, INFINITY}), Error);
  CHECK_THROWS_AS(Tensor({3}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(Tensor({0, 2}), Error);
  CHECK_THROWS_AS(ComplexVector({1.0}, {1.0, 2.0}), Error);
}

TEST_CASE("matmul examples") {
  Tape tape;
  auto eye = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  auto m = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK(matmul(eye, m).value() == Tensor({2, 2}, {1, 2, 3, 4}));

  auto r = tape.constant(Tensor({1, 2}, {1, 0}));
  auto c = tape.constant(Tensor({2, 1}, {0, 5}));
  CHECK(matmul(r, c).value()[0] == 0.0);

  std::mt19937_64 rng(7);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto got = matmul(tape.constant(a), tape.constant(b)).value();
  auto want = naive_matmul(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);

  CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(a)), Error);
  try {
    matmul(tape.constant(a), tape.constant(a));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

TEST_CASE("softmax_rows examples") {
  auto sm = [](std::vector<double> row) {
    const auto n = row.size();
    return softmax_rows_value(Tensor({1, n}, std::move(row)));
  };
  auto y = sm({0, 0, 0});
  for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));

  for (double c : {-50.0, 0.0, 3.7, 700.0}) {
    auto z = sm({c, c + std::numbers::ln2});
    CHECK(std::abs(z[0] - 1.0 / 3) < 1e-12);
    CHECK(std::abs(z[1] - 2.0 / 3) < 1e-12);
  }

  // Extended-precision exp-normalize oracle.
  auto w = sm({1, 2, 3});
  long double e1 = std::exp(1.0L), e2 = std::exp(2.0L), e3 = std::exp(3.0L), s = e1 + e2 + e3;
  CHECK(std::abs(w[0] - static_cast<double>(e1 / s)) < 1e-12);
  CHECK(std::abs(w[1] - static_cast<double>(e2 / s)) < 1e-12);
  CHECK(std::abs(w[2] - static_cast<double>(e3 / s)) < 1e-12);
}

TEST_CASE("softmax_rows property: stochastic rows and shift invariance") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({4, 7}, rng, 5.0);
    auto y = softmax_rows_value(x);
    auto xs = x;
    for (std::size_t r = 0; r < 4; ++r) {
      const double c = shift(rng);
      for (std::size_t k = 0; k < 7; ++k) xs(r, k) += c;
    }
    auto ys = softmax_rows_value(xs);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) {
        CHECK(y(r, k) >= 0.0);
        s += y(r, k);
        CHECK(std::abs(y(r, k) - ys(r, k)) < 1e-6);
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Tape tape;
  auto gain = tape.constant(Tensor::full({2}, 1.0));
  auto bias = tape.constant(Tensor({2}));
  auto flat = layer_norm(tape.constant(Tensor({1, 2}, {5, 5})), gain, bias, 1e-5).value();
  CHECK(flat[0] == 0.0);
  CHECK(flat[1] == 0.0);

  auto unit = layer_norm(tape.constant(Tensor({1, 2}, {1, -1})), gain, bias, 1e-14).value();
  CHECK(unit[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(unit[1] == doctest::Approx(-1.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  const double eps = 1e-5;
  auto x = random_tensor({4, 8}, rng, 2.0);
  auto g8 = tape.constant(Tensor::full({8}, 1.0));
  auto b8 = tape.constant(Tensor({8}));
  auto y = layer_norm(tape.constant(x), g8, b8, eps).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var_in = 0.0, var_out = 0.0, mean_in = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
      mean += y(r, c);
      mean_in += x(r, c);
    }
    mean /= 8;
    mean_in /= 8;
    for (std::size_t c = 0; c < 8; ++c) {
      var_out += (y(r, c) - mean) * (y(r, c) - mean);
      var_in += (x(r, c) - mean_in) * (x(r, c) - mean_in);
    }
    var_out /= 8;
    var_in /= 8;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var_out - var_in / (var_in + eps)) < 1e-6);
  }
}

TEST_CASE("backward examples") {
  Parameter p("p", Tensor({3}, {0.5, -2.0, 4.0}));
  {
    Tape tape;
    tape.backward(sum(tape.parameter(p)));
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.grad[i] == 1.0);

  Parameter q("q", Tensor({2}, {1.0, 2.0}));
  {
    Tape tape;
    auto v = tape.parameter(q);
    tape.backward(sum(mul(v, v)));
  }
  CHECK(q.grad[0] == 4.0 / 2.0);
  CHECK(q.grad[1] == 4.0);

  Tape tape;
  auto v = tape.parameter(q);
  try {
    tape.backward(mul(v, v));
    FAIL("expected contract error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Contract);
  }
}

TEST_CASE("every primitive matches central differences") {
  std::mt19937_64 rng(2024);
  Parameter a("a", random_tensor({3, 4}, rng));
  Parameter b("b", random_tensor({4, 5}, rng));
  Parameter c("c", random_tensor({5, 4}, rng));
  Parameter row("row", random_tensor({1, 4}, rng));
  Parameter gain("gain", random_tensor({4}, rng));
  Parameter s("s", Tensor::scalar(1.7));
  const std::vector<double> labels{1, 0, 1};

  auto check = [&](const char* name, std::vector<Parameter*> ps, std::function<Var(Tape&)> f) {
    CAPTURE(name);
    auto rep = testing::check_gradients(ps, f);
    CHECK(rep.max_rel < 1e-5);
  };
  check("matmul", {&a, &b}, [&](Tape& t) { return sum(gelu(matmul(t.parameter(a), t.parameter(b)))); });
  check("matmul_nt", {&a, &c},
        [&](Tape& t) { return sum(gelu(matmul_nt(t.parameter(a), t.parameter(c)))); });
  check("add/sub/mul", {&a},
        [&](Tape& t) {
          auto x = t.parameter(a);
          return sum(mul(add(x, x), sub(x, scale(x, 0.3))));
        });
  check("add_row", {&a, &row}, [&](Tape& t) { return sq_norm(add_row(t.parameter(a), t.parameter(row))); });
  check("layer_norm", {&a, &gain, &row},
        [&](Tape& t) {
          auto y = layer_norm(t.parameter(a), t.parameter(gain), t.parameter(row), 1e-5);
          return sum(mul(y, gelu(y)));
        });
  check("softmax_rows", {&a},
        [&](Tape& t) {
          auto y = softmax_rows(t.parameter(a));
          return dot(y, t.constant(Tensor({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12})));
        });
  check("mean_rows/l2_normalize", {&a},
        [&](Tape& t) {
          auto y = l2_normalize(mean_rows(t.parameter(a)));
          return dot(y, t.constant(Tensor({1, 4}, {0.3, -1.0, 2.0, 0.1})));
        });
  check("concat_cols", {&a, &b},
        [&](Tape& t) {
          std::vector<Var> parts{t.parameter(a), scale(t.parameter(a), 2.0)};
          return sq_norm(matmul(concat_cols(parts), t.constant(Tensor::full({8, 2}, 0.25))));
        });
  check("cosine", {&row, &gain},
        [&](Tape& t) { return cosine(t.parameter(row), t.parameter(gain)); });
  check("div_scalar", {&row, &s}, [&](Tape& t) { return sq_norm(div_scalar(t.parameter(row), t.parameter(s))); });
  check("log_sum_exp", {&row, &gain},
        [&](Tape& t) {
          std::vector<Var> xs{dot(t.parameter(row), t.parameter(gain)), sq_norm(t.parameter(row)),
                              sum(t.parameter(gain))};
          return log_sum_exp(xs);
        });
  check("weighted_bce", {&a},
        [&](Tape& t) {
          auto logits = matmul(t.parameter(a), t.constant(Tensor({4, 1}, {0.5, -0.2, 0.1, 0.3})));
          return weighted_bce(logits, labels, 2.5);
        });
}

TEST_CASE("shared subexpressions accumulate path gradients") {
  std::mt19937_64 rng(5);
  Parameter w("w", random_tensor({3, 3}, rng));
  // Shared: h = gelu(w); loss = sum(h*h) + sum(h)
  Tape shared;
  auto h = gelu(shared.parameter(w));
  auto loss = add(sum(mul(h, h)), sum(h));
  w.zero_grad();
  shared.backward(loss);
  Tensor g_shared = w.grad;

  // Duplicated subgraph oracle: each path gets its own copy of h.
  Tape dup;
  auto h1 = gelu(dup.parameter(w));
  auto h2 = gelu(dup.parameter(w));
  auto h3 = gelu(dup.parameter(w));
  auto loss2 = add(sum(mul(h1, h2)), sum(h3));
  w.zero_grad();
  dup.backward(loss2);
  for (std::size_t i = 0; i < w.grad.size(); ++i) CHECK(std::abs(w.grad[i] - g_shared[i]) < 1e-12);
}

TEST_CASE("kernels are deterministic") {
  std::mt19937_64 rng(9);
  auto a = random_tensor({17, 23}, rng);
  auto b = random_tensor({23, 11}, rng);
  auto r1 = matmul_value(a, b);
  auto r2 = matmul_value(a, b);
  CHECK(r1 == r2);
  CHECK(softmax_rows_value(a) == softmax_rows_value(a));
}

TEST_CASE("adam examples") {
  Parameter p("p", Tensor({2}, {1.5, -0.5}));
  AdamState st;
  p.zero_grad();
  std::vector<Parameter*> ps{&p};
  adam_step(ps, st, AdamConfig{});
  CHECK(p.value[0] == 1.5);
  CHECK(p.value[1] == -0.5);

  // First step: m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps).
  Parameter s("s", Tensor::scalar(2.0));
  AdamState st2;
  s.grad[0] = -0.37;
  AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  std::vector<Parameter*> ss{&s};
  adam_step(ss, st2, cfg);
  CHECK(s.value[0] == doctest::Approx(2.0 - 0.05 * (-0.37) / (0.37 + 1e-8)).epsilon(1e-14));

  Parameter w("w", Tensor::scalar(0.0));
  AdamState st3;
  std::vector<Parameter*> ws{&w};
  for (int i = 0; i < 100; ++i) {
    w.grad[0] = 2.0 * (w.value[0] - 3.0);
    adam_step(ws, st3, AdamConfig{0.1});
  }
  CHECK(std::abs(w.value[0] - 3.0) < 0.1);

  try {
    adam_step(ws, st3, AdamConfig{0.0});
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}
