#include "ppgfp/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "ppgfp/error.hpp"

namespace ppgfp::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC as_mat(const Tensor& t) { return MapC(t.data().data(), t.rows(), t.cols()); }
Map as_mat(Tensor& t) { return Map(t.data().data(), t.rows(), t.cols()); }

void same_matrix_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::Dimension, std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                   shape_string(b.shape()));
  }
}

void require_scalar(const Tensor& t, const char* op) {
  if (t.size() != 1) fail(ErrorKind::Dimension, std::string(op) + ": expected scalar, got " + shape_string(t.shape()));
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  } else {
    std::fill(grad.storage().begin(), grad.storage().end(), 0.0);
  }
}

const Tensor& Var::value() const {
  if (!tape) fail(ErrorKind::Contract, "use of an unbound Var");
  return tape->value(id);
}

const Tensor& BackwardArgs::input(std::size_t k) const { return tape.value(inputs[k]); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::push(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape != this) fail(ErrorKind::Contract, "Var belongs to a different tape");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Tensor* Tape::grad(std::size_t id) const {
  if (id >= grads_.size() || grads_[id].empty()) return nullptr;
  return &grads_[id];
}

void Tape::backward(Var loss) {
  if (loss.tape != this) fail(ErrorKind::Contract, "backward: loss belongs to a different tape");
  if (nodes_[loss.id].value.size() != 1) fail(ErrorKind::Contract, "backward: loss must be a scalar");
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id] = Tensor::full(nodes_[loss.id].value.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (grads_[i].empty() || !node.requires_grad) continue;
    if (node.param) {
      auto& acc = node.param->grad;
      if (acc.shape() != node.value.shape()) acc = Tensor(node.value.shape());
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += grads_[i][k];
      continue;
    }
    if (!node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads_[in].empty()) grads_[in] = Tensor(nodes_[in].value.shape());
      slots[k] = &grads_[in];
    }
    node.backward(BackwardArgs{*this, node.value, grads_[i], node.inputs, slots});
  }
}

// ---- kernels -----------------------------------------------------------------

Tensor matmul_value(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::Dimension,
         "matmul: inner extents differ (" + shape_string(a.shape()) + " x " + shape_string(b.shape()) + ")");
  }
  Tensor c({a.rows(), b.cols()});
  as_mat(c).noalias() = as_mat(a) * as_mat(b);
  return c;
}

Tensor softmax_rows_value(const Tensor& x) {
  Tensor y(x.shape());
  const auto m = x.rows(), n = x.cols();
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = x.data().data() + r * n;
    double* out = y.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = std::exp(in[c] - mx);
      s += out[c];
    }
    const double inv = 1.0 / s;
    for (std::size_t c = 0; c < n; ++c) out[c] *= inv;
  }
  return y;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---- primitives --------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tensor out = matmul_value(a.value(), b.value());
  return a.tape->push(std::move(out), {a, b}, [](const BackwardArgs& g) {
    const auto& A = g.input(0);
    const auto& B = g.input(1);
    if (g.in_grads[0]) as_mat(*g.in_grads[0]).noalias() += as_mat(g.out_grad) * as_mat(B).transpose();
    if (g.in_grads[1]) as_mat(*g.in_grads[1]).noalias() += as_mat(A).transpose() * as_mat(g.out_grad);
  });
}

Var matmul_nt(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.cols()) {
    fail(ErrorKind::Dimension,
         "matmul_nt: inner extents differ (" + shape_string(A.shape()) + " x " + shape_string(B.shape()) + "^T)");
  }
  Tensor out({A.rows(), B.rows()});
  as_mat(out).noalias() = as_mat(A) * as_mat(B).transpose();
  return a.tape->push(std::move(out), {a, b}, [](const BackwardArgs& g) {
    const auto& A = g.input(0);
    const auto& B = g.input(1);
    if (g.in_grads[0]) as_mat(*g.in_grads[0]).noalias() += as_mat(g.out_grad) * as_mat(B);
    if (g.in_grads[1]) as_mat(*g.in_grads[1]).noalias() += as_mat(g.out_grad).transpose() * as_mat(A);
  });
}

Var add(Var a, Var b) {
  same_matrix_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->push(std::move(out), {a, b}, [](const BackwardArgs& g) {
    for (int k = 0; k < 2; ++k) {
      if (!g.in_grads[k]) continue;
      auto& gi = *g.in_grads[k];
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g.out_grad[i];
    }
  });
}

Var sub(Var a, Var b) {
  same_matrix_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->push(std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (g.in_grads[0]) {
      auto& gi = *g.in_grads[0];
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g.out_grad[i];
    }
    if (g.in_grads[1]) {
      auto& gi = *g.in_grads[1];
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] -= g.out_grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  same_matrix_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->push(std::move(out), {a, b}, [](const BackwardArgs& g) {
    const auto& A = g.input(0);
    const auto& B = g.input(1);
    if (g.in_grads[0]) {
      auto& gi = *g.in_grads[0];
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g.out_grad[i] * B[i];
    }
    if (g.in_grads[1]) {
      auto& gi = *g.in_grads[1];
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g.out_grad[i] * A[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& x : out.storage()) x *= s;
  return a.tape->push(std::move(out), {a}, [s](const BackwardArgs& g) {
    auto& gi = *g.in_grads[0];
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += s * g.out_grad[i];
  });
}

Var add_row(Var a, Var row) {
  const auto& A = a.value();
  const auto& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) {
    fail(ErrorKind::Dimension, "add_row: row " + shape_string(R.shape()) + " does not fit " + shape_string(A.shape()));
  }
  Tensor out = A;
  const auto m = A.rows(), n = A.cols();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += R[c];
  return a.tape->push(std::move(out), {a, row}, [m, n](const BackwardArgs& g) {
    if (g.in_grads[0]) {
      auto& gi = *g.in_grads[0];
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g.out_grad[i];
    }
    if (g.in_grads[1]) {
      auto& gr = *g.in_grads[1];
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gr[c] += g.out_grad[r * n + c];
    }
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (auto& x : out.storage()) x = gelu_value(x);
  return a.tape->push(std::move(out), {a}, [](const BackwardArgs& g) {
    const auto& x = g.input(0);
    auto& gi = *g.in_grads[0];
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g.out_grad[i] * gelu_grad(x[i]);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require(eps > 0.0, ErrorKind::Config, "layer_norm: eps must be positive");
  const auto& X = x.value();
  const auto m = X.rows(), n = X.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    fail(ErrorKind::Dimension, "layer_norm: gain/bias width must equal " + std::to_string(n));
  }
  Tensor out(X.shape());
  std::vector<double> xhat(m * n), inv_std(m);
  const auto& G = gain.value();
  const auto& B = bias.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = X.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mean) * inv_std[r];
      xhat[r * n + c] = h;
      out[r * n + c] = h * G[c] + B[c];
    }
  }
  return x.tape->push(std::move(out), {x, gain, bias},
                      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](const BackwardArgs& g) {
                        const auto& G = g.input(1);
                        const auto& gy = g.out_grad;
                        if (g.in_grads[1] || g.in_grads[2]) {
                          for (std::size_t r = 0; r < m; ++r)
                            for (std::size_t c = 0; c < n; ++c) {
                              if (g.in_grads[1]) (*g.in_grads[1])[c] += gy[r * n + c] * xhat[r * n + c];
                              if (g.in_grads[2]) (*g.in_grads[2])[c] += gy[r * n + c];
                            }
                        }
                        if (!g.in_grads[0]) return;
                        auto& gx = *g.in_grads[0];
                        const double inv_n = 1.0 / static_cast<double>(n);
                        for (std::size_t r = 0; r < m; ++r) {
                          double mean_g = 0.0, mean_gx = 0.0;
                          for (std::size_t c = 0; c < n; ++c) {
                            const double gh = gy[r * n + c] * G[c];
                            mean_g += gh;
                            mean_gx += gh * xhat[r * n + c];
                          }
                          mean_g *= inv_n;
                          mean_gx *= inv_n;
                          for (std::size_t c = 0; c < n; ++c) {
                            const double gh = gy[r * n + c] * G[c];
                            gx[r * n + c] += inv_std[r] * (gh - mean_g - xhat[r * n + c] * mean_gx);
                          }
                        }
                      });
}

Var softmax_rows(Var x) {
  Tensor out = softmax_rows_value(x.value());
  const auto m = out.rows(), n = out.cols();
  return x.tape->push(std::move(out), {x}, [m, n](const BackwardArgs& g) {
    const auto& Y = g.output;
    auto& gx = *g.in_grads[0];
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += g.out_grad[r * n + c] * Y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += Y[r * n + c] * (g.out_grad[r * n + c] - s);
    }
  });
}

Var mean_rows(Var x) {
  const auto& X = x.value();
  const auto m = X.rows(), n = X.cols();
  Tensor out({1, n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c] += X[r * n + c];
  for (auto& v : out.storage()) v /= static_cast<double>(m);
  return x.tape->push(std::move(out), {x}, [m, n](const BackwardArgs& g) {
    auto& gx = *g.in_grads[0];
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g.out_grad[c] * inv;
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::Dimension, "concat_cols: no inputs");
  const auto m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != m) fail(ErrorKind::Dimension, "concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({m, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& P = parts[k].value();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + off + c] = P[r * widths[k] + c];
    off += widths[k];
  }
  return parts[0].tape->push(std::move(out), parts, [m, total, widths](const BackwardArgs& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (g.in_grads[k]) {
        auto& gp = *g.in_grads[k];
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += g.out_grad[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var stack_rows(std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::Dimension, "stack_rows: no inputs");
  const auto n = parts[0].value().size();
  for (const auto& p : parts) {
    if (p.value().size() != n) fail(ErrorKind::Dimension, "stack_rows: inputs differ in length");
  }
  Tensor out({parts.size(), n});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    std::copy(src.begin(), src.end(), out.storage().begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return parts[0].tape->push(std::move(out), parts, [n](const BackwardArgs& g) {
    for (std::size_t k = 0; k < g.in_grads.size(); ++k) {
      if (!g.in_grads[k]) continue;
      auto& gp = *g.in_grads[k];
      for (std::size_t c = 0; c < n; ++c) gp[c] += g.out_grad[k * n + c];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->push(Tensor::scalar(s), {a}, [](const BackwardArgs& g) {
    const double go = g.out_grad[0];
    for (auto& v : g.in_grads[0]->storage()) v += go;
  });
}

Var dot(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.size() != B.size()) fail(ErrorKind::Dimension, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * B[i];
  return a.tape->push(Tensor::scalar(s), {a, b}, [](const BackwardArgs& g) {
    const double go = g.out_grad[0];
    const auto& A = g.input(0);
    const auto& B = g.input(1);
    if (g.in_grads[0])
      for (std::size_t i = 0; i < A.size(); ++i) (*g.in_grads[0])[i] += go * B[i];
    if (g.in_grads[1])
      for (std::size_t i = 0; i < A.size(); ++i) (*g.in_grads[1])[i] += go * A[i];
  });
}

Var sq_norm(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.tape->push(Tensor::scalar(s), {a}, [](const BackwardArgs& g) {
    const double go = g.out_grad[0];
    const auto& A = g.input(0);
    auto& ga = *g.in_grads[0];
    for (std::size_t i = 0; i < A.size(); ++i) ga[i] += 2.0 * go * A[i];
  });
}

Var cosine(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.size() != B.size()) fail(ErrorKind::Dimension, "cosine: length mismatch");
  const double na = norm2(A.data()), nb = norm2(B.data());
  if (na < 1e-12 || nb < 1e-12) fail(ErrorKind::Numeric, "cosine similarity of a zero-norm vector");
  double d = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) d += A[i] * B[i];
  const double cs = d / (na * nb);
  return a.tape->push(Tensor::scalar(cs), {a, b}, [na, nb, cs](const BackwardArgs& g) {
    const double go = g.out_grad[0];
    const auto& A = g.input(0);
    const auto& B = g.input(1);
    if (g.in_grads[0])
      for (std::size_t i = 0; i < A.size(); ++i)
        (*g.in_grads[0])[i] += go * (B[i] / (na * nb) - cs * A[i] / (na * na));
    if (g.in_grads[1])
      for (std::size_t i = 0; i < A.size(); ++i)
        (*g.in_grads[1])[i] += go * (A[i] / (na * nb) - cs * B[i] / (nb * nb));
  });
}

Var l2_normalize(Var a) {
  const auto& A = a.value();
  const double n = norm2(A.data());
  if (n < 1e-12) fail(ErrorKind::Numeric, "l2_normalize: zero vector");
  Tensor out = A;
  for (auto& v : out.storage()) v /= n;
  return a.tape->push(std::move(out), {a}, [n](const BackwardArgs& g) {
    const auto& y = g.output;
    double yg = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) yg += y[i] * g.out_grad[i];
    auto& ga = *g.in_grads[0];
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += (g.out_grad[i] - y[i] * yg) / n;
  });
}

Var div_scalar(Var a, Var s) {
  require_scalar(s.value(), "div_scalar");
  const double sv = s.value()[0];
  if (sv == 0.0) fail(ErrorKind::Numeric, "div_scalar: division by zero");
  Tensor out = a.value();
  for (auto& v : out.storage()) v /= sv;
  return a.tape->push(std::move(out), {a, s}, [sv](const BackwardArgs& g) {
    const auto& A = g.input(0);
    if (g.in_grads[0])
      for (std::size_t i = 0; i < A.size(); ++i) (*g.in_grads[0])[i] += g.out_grad[i] / sv;
    if (g.in_grads[1]) {
      double acc = 0.0;
      for (std::size_t i = 0; i < A.size(); ++i) acc += g.out_grad[i] * A[i];
      (*g.in_grads[1])[0] -= acc / (sv * sv);
    }
  });
}

Var log_sum_exp(std::span<const Var> scalars) {
  require(!scalars.empty(), ErrorKind::Dimension, "log_sum_exp: no inputs");
  std::vector<double> x;
  for (const auto& v : scalars) {
    require_scalar(v.value(), "log_sum_exp");
    x.push_back(v.value()[0]);
  }
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = std::exp(x[i] - lse);
  return scalars[0].tape->push(Tensor::scalar(lse), scalars, [w = std::move(w)](const BackwardArgs& g) {
    for (std::size_t i = 0; i < w.size(); ++i)
      if (g.in_grads[i]) (*g.in_grads[i])[0] += g.out_grad[0] * w[i];
  });
}

Var weighted_bce(Var logits, std::span<const double> labels, double pos_weight) {
  require(pos_weight > 0.0, ErrorKind::Config, "weighted_bce: pos_weight must be positive");
  const auto& L = logits.value();
  if (L.size() != labels.size()) fail(ErrorKind::Dimension, "weighted_bce: logits/labels length mismatch");
  const double n = static_cast<double>(L.size());
  double total = 0.0;
  std::vector<double> y(labels.begin(), labels.end());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) fail(ErrorKind::Input, "weighted_bce: labels must be 0 or 1");
    total += pos_weight * y[i] * softplus(-L[i]) + (1.0 - y[i]) * softplus(L[i]);
  }
  return logits.tape->push(Tensor::scalar(total / n), {logits},
                           [y = std::move(y), pos_weight, n](const BackwardArgs& g) {
                             const auto& L = g.input(0);
                             auto& gl = *g.in_grads[0];
                             for (std::size_t i = 0; i < y.size(); ++i) {
                               const double d = -pos_weight * y[i] * sigmoid(-L[i]) + (1.0 - y[i]) * sigmoid(L[i]);
                               gl[i] += g.out_grad[0] * d / n;
                             }
                           });
}

}  // namespace ppgfp::ad
