#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ppgfp/tensor.hpp"

namespace ppgfp::ad {

/// Trainable tensor with a same-shape gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad();
};

class Tape;

/// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

/// What a backward closure sees: the gradient arriving at its output and one
/// accumulator slot per input (nullptr when that input needs no gradient).
struct BackwardArgs {
  const Tape& tape;
  const Tensor& output;
  const Tensor& out_grad;
  std::span<const std::size_t> inputs;
  std::span<Tensor* const> in_grads;

  const Tensor& input(std::size_t k) const;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Ordered record of primitive applications. Nodes are appended after their
/// inputs, so reverse insertion order is a valid topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  /// Record a primitive. `fn` may be empty for non-differentiable outputs.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Reverse sweep from a scalar node; adds into every reachable Parameter::grad.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient held by a node after backward(); nullptr if none reached it.
  const Tensor* grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// ---- primitives ------------------------------------------------------------

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // element-wise
Var scale(Var a, double s);
Var add_row(Var a, Var row);  // broadcasts a [1,n] row over every row of a
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps);
Var softmax_rows(Var x);
Var mean_rows(Var x);  // [m,n] -> [1,n]
Var concat_cols(std::span<const Var> parts);
Var stack_rows(std::span<const Var> parts);  // n equal-length inputs -> [n, len]
Var sum(Var a);
Var dot(Var a, Var b);
Var sq_norm(Var a);
Var cosine(Var a, Var b);
Var l2_normalize(Var a);
Var div_scalar(Var a, Var s);  // a / s, s scalar
Var log_sum_exp(std::span<const Var> scalars);
/// Mean over the batch of -[w*y*log(sigmoid(l)) + (1-y)*log(1-sigmoid(l))].
Var weighted_bce(Var logits, std::span<const double> labels, double pos_weight);

// ---- plain kernels shared with tests and non-tape code ----------------------

Tensor matmul_value(const Tensor& a, const Tensor& b);
Tensor softmax_rows_value(const Tensor& x);
double gelu_value(double x);
double gelu_grad(double x);
double softplus(double x);
double sigmoid(double x);

}  // namespace ppgfp::ad
