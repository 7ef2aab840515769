#pragma once

#include <random>
#include <string>
#include <vector>

#include "ppgfp/autodiff.hpp"

namespace ppgfp::xattn {

/// softmax(Q K^T / sqrt(scale_dim)) V.
ad::Var attention(ad::Var q, ad::Var k, ad::Var v, double scale_dim);
Tensor attention_value(const Tensor& q, const Tensor& k, const Tensor& v, double scale_dim);

struct HeadParams {
  ad::Parameter wq;  // [d, d/h]
  ad::Parameter wk;
  ad::Parameter wv;
};

/// Cross-modal multi-head attention: queries from `g_a`, keys and values from
/// `g_b`. Output keeps the query length. Also owns the pooled projection used
/// to form the latent of the query modality.
class MultiHead {
 public:
  MultiHead(std::string prefix, std::size_t width, std::size_t heads, bool per_head_scale, std::mt19937_64& rng);

  ad::Var forward(ad::Tape& tape, ad::Var g_a, ad::Var g_b);
  /// Proj(Pool(seq)) normalized to unit length.
  ad::Var project(ad::Tape& tape, ad::Var seq);

  std::size_t width() const { return width_; }
  std::size_t heads() const { return heads_.size(); }
  double scale_dim() const;
  std::vector<HeadParams>& head_params() { return heads_; }
  ad::Parameter& w_o() { return w_o_; }
  ad::Parameter& proj() { return proj_; }

  std::vector<ad::Parameter*> attention_parameters();
  std::vector<ad::Parameter*> parameters();

 private:
  std::size_t width_;
  bool per_head_scale_;
  std::vector<HeadParams> heads_;
  ad::Parameter w_o_;   // [d, d]
  ad::Parameter proj_;  // [d, d]
};

/// Mean over rows, linear map, L2 normalization.
ad::Var pool_project(ad::Var seq, ad::Var proj);

inline ad::Var fuse(ad::Var u, ad::Var v) { return ad::add(u, v); }

/// d -> d/2 -> 1 with GELU; returns the raw logit as a [1, 1] node.
class Classifier {
 public:
  Classifier(std::string prefix, std::size_t width, std::mt19937_64& rng);

  ad::Var forward(ad::Tape& tape, ad::Var z);
  std::vector<ad::Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
  ad::Parameter& w1() { return w1_; }
  ad::Parameter& b1() { return b1_; }
  ad::Parameter& w2() { return w2_; }
  ad::Parameter& b2() { return b2_; }

 private:
  ad::Parameter w1_, b1_, w2_, b2_;
};

/// Analytic operation count of one multi-head forward plus projection.
double multihead_flops(std::size_t len_a, std::size_t len_b, std::size_t width, std::size_t heads);
double classifier_flops(std::size_t width);

}  // namespace ppgfp::xattn
