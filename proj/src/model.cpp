#include "ppgfp/model.hpp"

#include <cmath>

#include "ppgfp/error.hpp"

namespace ppgfp {

Variant parse_variant(const std::string& s) {
  if (s == "fused") return Variant::Fused;
  if (s == "ppg") return Variant::Ppg;
  if (s == "fingerprint") return Variant::Fingerprint;
  fail(ErrorKind::Config, "unknown variant '" + s + "' (expected ppg, fingerprint or fused)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Fused:
      return "fused";
    case Variant::Ppg:
      return "ppg";
    case Variant::Fingerprint:
      return "fingerprint";
  }
  return "fused";
}

void ModelConfig::validate() const {
  enc_u.validate();
  enc_v.validate();
  if (enc_u.width != enc_v.width) fail(ErrorKind::Config, "model: both encoders must share the width");
  if (heads == 0 || enc_u.width % heads != 0) fail(ErrorKind::Config, "model: heads must divide the width");
  if (enc_u.width < 2) fail(ErrorKind::Config, "model: width must be at least 2");
}

namespace {

const ModelConfig& checked(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(checked(cfg)),
      rng_(seed),
      enc_u_("enc_u", cfg_.enc_u, rng_),
      enc_v_("enc_v", cfg_.enc_v, rng_),
      u2v_("xattn.u2v", cfg_.width(), cfg_.heads, cfg_.per_head_scale, rng_),
      v2u_("xattn.v2u", cfg_.width(), cfg_.heads, cfg_.per_head_scale, rng_),
      clf_("clf", cfg_.width(), rng_) {}

Latents Model::head(ad::Tape& tape, std::optional<ad::Var> g_u, std::optional<ad::Var> g_v) {
  Latents out;
  switch (cfg_.variant) {
    case Variant::Fused: {
      if (!g_u || !g_v) fail(ErrorKind::Contract, "fused model needs both modalities");
      out.u = u2v_.project(tape, u2v_.forward(tape, *g_u, *g_v));
      out.v = v2u_.project(tape, v2u_.forward(tape, *g_v, *g_u));
      out.z = xattn::fuse(*out.u, *out.v);
      break;
    }
    case Variant::Ppg:
      if (!g_u) fail(ErrorKind::Contract, "ppg model needs the beat sequence");
      out.u = u2v_.project(tape, *g_u);
      out.z = *out.u;
      break;
    case Variant::Fingerprint:
      if (!g_v) fail(ErrorKind::Contract, "fingerprint model needs the fingerprint sequence");
      out.v = v2u_.project(tape, *g_v);
      out.z = *out.v;
      break;
  }
  out.logit = clf_.forward(tape, out.z);
  return out;
}

Latents Model::forward(ad::Tape& tape, std::span<const double> beat, std::span<const double> fingerprint) {
  std::optional<ad::Var> g_u, g_v;
  if (cfg_.uses_ppg()) g_u = encode_u(tape, beat);
  if (cfg_.uses_fingerprint()) g_v = encode_v(tape, fingerprint);
  return head(tape, g_u, g_v);
}

double Model::score(std::span<const double> beat, std::span<const double> fingerprint) {
  ad::Tape tape;
  return ad::sigmoid(forward(tape, beat, fingerprint).logit.item());
}

std::vector<ad::Parameter*> Model::all_parameters() {
  std::vector<ad::Parameter*> out;
  for (auto* p : enc_u_.parameters()) out.push_back(p);
  for (auto* p : enc_v_.parameters()) out.push_back(p);
  for (auto* p : u2v_.parameters()) out.push_back(p);
  for (auto* p : v2u_.parameters()) out.push_back(p);
  for (auto* p : clf_.parameters()) out.push_back(p);
  return out;
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  auto append = [&out](const std::vector<ad::Parameter*>& ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  switch (cfg_.variant) {
    case Variant::Fused:
      return all_parameters();
    case Variant::Ppg:
      append(enc_u_.parameters());
      out.push_back(&u2v_.proj());
      break;
    case Variant::Fingerprint:
      append(enc_v_.parameters());
      out.push_back(&v2u_.proj());
      break;
  }
  append(clf_.parameters());
  return out;
}

std::size_t Model::project_stable() { return enc_u_.project_stable() + enc_v_.project_stable(); }

std::vector<NamedTensor> Model::state() const {
  std::vector<NamedTensor> out;
  for (auto* p : const_cast<Model*>(this)->all_parameters()) out.push_back({p->name, p->value, DType::F64});
  return out;
}

void Model::load_state(std::span<const NamedTensor> tensors) {
  for (auto* p : all_parameters()) {
    const auto& t = find_tensor(tensors, p->name);
    if (t.tensor.shape() != p->value.shape()) {
      fail(ErrorKind::Data, "checkpoint tensor '" + p->name + "' has shape " + shape_string(t.tensor.shape()) +
                                ", model expects " + shape_string(p->value.shape()));
    }
    p->value = t.tensor;
    p->zero_grad();
  }
}

double Model::flops() const {
  const auto lu = cfg_.enc_u.tokens(), lv = cfg_.enc_v.tokens(), d = cfg_.width();
  const double pool_proj = static_cast<double>(d) * 3.0 + 2.0 * static_cast<double>(d * d);
  double total = xattn::classifier_flops(d);
  switch (cfg_.variant) {
    case Variant::Fused:
      total += ssm::encoder_flops(cfg_.enc_u) + ssm::encoder_flops(cfg_.enc_v) +
               xattn::multihead_flops(lu, lv, d, cfg_.heads) + xattn::multihead_flops(lv, lu, d, cfg_.heads) +
               static_cast<double>(d);
      break;
    case Variant::Ppg:
      total += ssm::encoder_flops(cfg_.enc_u) + static_cast<double>(lu * d) + pool_proj;
      break;
    case Variant::Fingerprint:
      total += ssm::encoder_flops(cfg_.enc_v) + static_cast<double>(lv * d) + pool_proj;
      break;
  }
  return total;
}

}  // namespace ppgfp
