#include "ppgfp/attention.hpp"

#include <cmath>

#include "ppgfp/error.hpp"

namespace ppgfp::xattn {

namespace {

ad::Parameter normal_param(const std::string& name, Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = n(rng);
  return ad::Parameter(name, std::move(t));
}

}  // namespace

ad::Var attention(ad::Var q, ad::Var k, ad::Var v, double scale_dim) {
  if (q.value().cols() != k.value().cols()) fail(ErrorKind::Dimension, "attention: query/key widths differ");
  if (k.value().rows() != v.value().rows()) fail(ErrorKind::Dimension, "attention: key/value lengths differ");
  auto scores = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(scale_dim));
  return ad::matmul(ad::softmax_rows(scores), v);
}

Tensor attention_value(const Tensor& q, const Tensor& k, const Tensor& v, double scale_dim) {
  ad::Tape tape;
  return attention(tape.constant(q), tape.constant(k), tape.constant(v), scale_dim).value();
}

MultiHead::MultiHead(std::string prefix, std::size_t width, std::size_t heads, bool per_head_scale,
                     std::mt19937_64& rng)
    : width_(width), per_head_scale_(per_head_scale) {
  if (heads == 0 || width % heads != 0) fail(ErrorKind::Config, "multihead: heads must divide the width");
  const std::size_t dk = width / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  for (std::size_t i = 0; i < heads; ++i) {
    const std::string base = prefix + ".head" + std::to_string(i) + ".";
    heads_.push_back({normal_param(base + "wq", {width, dk}, s, rng), normal_param(base + "wk", {width, dk}, s, rng),
                      normal_param(base + "wv", {width, dk}, s, rng)});
  }
  w_o_ = normal_param(prefix + ".wo", {width, width}, s, rng);
  proj_ = normal_param(prefix + ".proj", {width, width}, s, rng);
}

double MultiHead::scale_dim() const {
  return per_head_scale_ ? static_cast<double>(width_ / heads_.size()) : static_cast<double>(width_);
}

ad::Var MultiHead::forward(ad::Tape& tape, ad::Var g_a, ad::Var g_b) {
  if (g_a.value().cols() != width_ || g_b.value().cols() != width_) {
    fail(ErrorKind::Dimension, "multihead: inputs must have width " + std::to_string(width_));
  }
  std::vector<ad::Var> outs;
  outs.reserve(heads_.size());
  for (auto& h : heads_) {
    auto q = ad::matmul(g_a, tape.parameter(h.wq));
    auto k = ad::matmul(g_b, tape.parameter(h.wk));
    auto v = ad::matmul(g_b, tape.parameter(h.wv));
    outs.push_back(attention(q, k, v, scale_dim()));
  }
  return ad::matmul(ad::concat_cols(outs), tape.parameter(w_o_));
}

ad::Var MultiHead::project(ad::Tape& tape, ad::Var seq) { return pool_project(seq, tape.parameter(proj_)); }

std::vector<ad::Parameter*> MultiHead::attention_parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& h : heads_) {
    out.push_back(&h.wq);
    out.push_back(&h.wk);
    out.push_back(&h.wv);
  }
  out.push_back(&w_o_);
  return out;
}

std::vector<ad::Parameter*> MultiHead::parameters() {
  auto out = attention_parameters();
  out.push_back(&proj_);
  return out;
}

ad::Var pool_project(ad::Var seq, ad::Var proj) { return ad::l2_normalize(ad::matmul(ad::mean_rows(seq), proj)); }

Classifier::Classifier(std::string prefix, std::size_t width, std::mt19937_64& rng) {
  if (width < 2) fail(ErrorKind::Config, "classifier: width must be at least 2");
  const std::size_t hidden = width / 2;
  w1_ = normal_param(prefix + ".w1", {width, hidden}, std::sqrt(2.0 / static_cast<double>(width)), rng);
  b1_ = ad::Parameter(prefix + ".b1", Tensor({hidden}));
  w2_ = normal_param(prefix + ".w2", {hidden, 1}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  b2_ = ad::Parameter(prefix + ".b2", Tensor({1}));
}

ad::Var Classifier::forward(ad::Tape& tape, ad::Var z) {
  auto h = ad::gelu(ad::add_row(ad::matmul(z, tape.parameter(w1_)), tape.parameter(b1_)));
  return ad::add_row(ad::matmul(h, tape.parameter(w2_)), tape.parameter(b2_));
}

double multihead_flops(std::size_t len_a, std::size_t len_b, std::size_t width, std::size_t heads) {
  const double la = static_cast<double>(len_a), lb = static_cast<double>(len_b), d = static_cast<double>(width);
  const double dk = d / static_cast<double>(heads);
  double per_head = 2.0 * la * d * dk      // Q
                    + 4.0 * lb * d * dk    // K, V
                    + 2.0 * la * lb * dk   // scores
                    + la * lb              // scaling
                    + 5.0 * la * lb        // softmax
                    + 2.0 * la * lb * dk;  // weighted values
  return static_cast<double>(heads) * per_head + 2.0 * la * d * d  // output map
         + la * d + 2.0 * d * d + 3.0 * d;                         // pool, projection, normalization
}

double classifier_flops(std::size_t width) {
  const double d = static_cast<double>(width), h = d / 2.0;
  return 2.0 * d * h + h + 8.0 * h + 2.0 * h + 1.0;
}

}  // namespace ppgfp::xattn
