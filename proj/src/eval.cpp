#include "ppgfp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ppgfp/error.hpp"
#include "ppgfp/image.hpp"
#include "ppgfp/keyvalue.hpp"
#include "ppgfp/rng.hpp"

namespace ppgfp::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double den = std::sqrt(aa * bb);
  return den > 0.0 ? ab / den : 0.0;
}

std::vector<std::size_t> validation_ids(const data::Dataset& ds, const train::Split& split, std::size_t user) {
  std::vector<std::size_t> ids;
  for (auto id : split.validation)
    if (ds.samples[id].user == user) ids.push_back(id);
  return ids;
}

}  // namespace

std::size_t ScoreSet::genuine() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
std::size_t ScoreSet::impostor() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0)); }

void ScoreSet::validate() const {
  if (scores.size() != labels.size()) fail(ErrorKind::Metric, "score set: scores and labels differ in length");
  for (double s : scores)
    if (!std::isfinite(s)) fail(ErrorKind::Metric, "score set: non-finite score");
  for (int l : labels)
    if (l != 0 && l != 1) fail(ErrorKind::Metric, "score set: labels must be 0 or 1");
  if (genuine() == 0 || impostor() == 0) fail(ErrorKind::Metric, "score set: both genuine and impostor scores are needed");
}

std::vector<RocPoint> roc(const ScoreSet& s) {
  s.validate();
  std::vector<std::size_t> order(s.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  const double ng = static_cast<double>(s.genuine()), ni = static_cast<double>(s.impostor());
  // Sweep upward: at threshold t every score below t is rejected.
  std::vector<RocPoint> out{{-kInf, 1.0, 0.0}};
  std::size_t rej_g = 0, rej_i = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = s.scores[order[k]];
    out.push_back({t, (ni - static_cast<double>(rej_i)) / ni, static_cast<double>(rej_g) / ng});
    for (; k < order.size() && s.scores[order[k]] == t; ++k) (s.labels[order[k]] ? rej_g : rej_i) += 1;
  }
  out.push_back({kInf, 0.0, 1.0});
  return out;
}

EerMode parse_eer_mode(const std::string& s) {
  if (s == "linear") return EerMode::Linear;
  if (s == "step") return EerMode::Step;
  fail(ErrorKind::Config, "eval.eer must be 'linear' or 'step', got '" + s + "'");
}

std::string to_string(EerMode m) { return m == EerMode::Linear ? "linear" : "step"; }

EerResult eer(std::span<const RocPoint> curve, EerMode mode) {
  if (curve.size() < 2 || curve.front().far < curve.front().frr || curve.back().far > curve.back().frr)
    fail(ErrorKind::Metric, "eer: curve must run from FAR >= FRR to FAR <= FRR");
  std::size_t i = 0;
  while (curve[i].far > curve[i].frr) ++i;
  if (i == 0) return {curve[0].far, curve[0].threshold};
  const auto &a = curve[i - 1], &b = curve[i];
  const double da = a.far - a.frr, db = b.far - b.frr;  // da > 0 >= db
  if (mode == EerMode::Step) {
    const auto& p = da <= -db ? a : b;
    return {0.5 * (p.far + p.frr), b.threshold};
  }
  const double lambda = da / (da - db);
  return {a.far + lambda * (b.far - a.far), b.threshold};
}

double accuracy(const ScoreSet& s, double threshold) {
  if (s.scores.size() != s.labels.size() || s.scores.empty()) fail(ErrorKind::Metric, "accuracy: empty or ragged score set");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) ok += (s.scores[i] >= threshold) == (s.labels[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(s.scores.size());
}

std::string roc_csv(std::span<const RocPoint> curve) {
  std::ostringstream out;
  out << "threshold,FAR,FRR\n";
  for (const auto& p : curve) out << format_real(p.threshold) << ',' << format_real(p.far) << ',' << format_real(p.frr) << '\n';
  return out.str();
}

UserEval evaluate_user(Model& model, const data::Dataset& ds, const train::Split& split, std::size_t target,
                       const loss::Moments& moments, const EvalConfig& cfg) {
  const auto& mc = model.config();
  std::map<std::size_t, std::vector<std::size_t>> by_user;
  for (auto u : ds.users()) {
    auto ids = validation_ids(ds, split, u);
    if (!ids.empty()) by_user[u] = std::move(ids);
  }
  if (!by_user.count(target)) fail(ErrorKind::Data, "target user " + std::to_string(target) + " has no validation samples");
  if (by_user.size() < 2) fail(ErrorKind::Data, "no impostor validation samples");

  // Encoder outputs per sample, computed once; each pair then runs the head alone.
  std::map<std::size_t, Tensor> gu, gv;
  for (const auto& [u, ids] : by_user)
    for (auto id : ids) {
      ad::Tape tape;
      if (mc.uses_ppg()) gu.emplace(id, model.encode_u(tape, ds.samples[id].beat).value());
      if (mc.uses_fingerprint()) gv.emplace(id, model.encode_v(tape, ds.samples[id].fingerprint).value());
    }

  const bool fused = mc.variant == Variant::Fused;
  UserEval out;
  out.user = target;
  double cos_sum = 0.0;
  std::size_t cos_n = 0;
  for (const auto& [u, ids] : by_user)
    for (auto b : ids)
      for (auto f : ids) {
        ad::Tape tape;
        std::optional<ad::Var> vu, vv;
        if (mc.uses_ppg()) vu = tape.constant(gu.at(b));
        if (mc.uses_fingerprint()) vv = tape.constant(gv.at(f));
        const auto lat = model.head(tape, vu, vv);
        out.scores.scores.push_back(ad::sigmoid(lat.logit.item()));
        out.scores.labels.push_back(u == target ? 1 : 0);
        if (fused && u != target) {
          cos_sum += 0.5 * (cosine(moments.mu_u.data(), lat.v->value().data()) +
                            cosine(moments.mu_v.data(), lat.u->value().data()));
          ++cos_n;
        }
      }
  const auto curve = roc(out.scores);
  out.eer = eer(curve, cfg.mode);
  out.threshold = cfg.threshold.value_or(out.eer.threshold);
  out.acc = accuracy(out.scores, out.threshold);
  out.moment_cos = fused ? cosine(moments.mu_u.data(), moments.mu_v.data()) : kNaN;
  out.impostor_cos = fused ? cos_sum / static_cast<double>(cos_n) : kNaN;
  return out;
}

UserRun run_user(const ModelConfig& mc, std::uint64_t model_seed, const data::Dataset& ds, const train::Split& split,
                 std::size_t target, const train::TrainConfig& tc, const EvalConfig& ec) {
  Model model(mc, model_seed);
  UserRun r;
  r.train = train::train_user(model, ds, split, target, tc);
  r.eval = evaluate_user(model, ds, split, target, r.train.final_moments, ec);
  return r;
}

std::string modality(Variant v) {
  switch (v) {
    case Variant::Ppg: return "ppg";
    case Variant::Fingerprint: return "fingerprint";
    case Variant::Fused: return "ppg+fingerprint";
  }
  return "";
}

std::string AblationReport::csv() const {
  std::ostringstream out;
  out << "variant,modality,ACC,EER,FLOPs\n";
  for (const auto& s : summary)
    out << to_string(s.variant) << ',' << modality(s.variant) << ',' << format_real(s.acc) << ',' << format_real(s.eer)
        << ',' << format_real(s.flops) << '\n';
  return out.str();
}

std::string AblationReport::per_user_csv() const {
  std::ostringstream out;
  out << "variant,user,ACC,EER\n";
  for (const auto& r : rows)
    out << to_string(r.variant) << ',' << r.user << ',' << format_real(r.acc) << ',' << format_real(r.eer) << '\n';
  return out.str();
}

std::string AblationReport::text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %-16s %8s %8s %12s\n", "variant", "modality", "ACC%", "EER%", "FLOPs");
  out << line;
  for (const auto& s : summary) {
    std::snprintf(line, sizeof line, "%-12s %-16s %8.2f %8.2f %12.4g\n", to_string(s.variant).c_str(),
                  modality(s.variant).c_str(), 100.0 * s.acc, 100.0 * s.eer, s.flops);
    out << line;
  }
  return out.str();
}

AblationReport ablation_run(const data::Dataset& ds, const train::Split& split, std::span<const std::size_t> users,
                            const ModelConfig& base, std::uint64_t model_seed, const train::TrainConfig& tc,
                            const EvalConfig& ec, std::span<const Variant> variants) {
  const std::set<Variant> have(variants.begin(), variants.end());
  for (auto v : {Variant::Ppg, Variant::Fingerprint, Variant::Fused})
    if (!have.count(v)) fail(ErrorKind::Config, "ablation needs the ppg, fingerprint and fused variants");
  if (users.empty()) fail(ErrorKind::Config, "ablation needs at least one target user");

  AblationReport rep;
  for (auto v : variants) {
    ModelConfig mc = base;
    mc.variant = v;
    const auto pipeline_before = image::pipeline_invocations();
    VariantSummary sum{v, 0.0, 0.0, Model(mc, model_seed).flops()};
    for (auto user : users) {
      Model model(mc, derive_seed(model_seed, user));
      const auto tr = train::train_user(model, ds, split, user, tc);
      const auto ev = evaluate_user(model, ds, split, user, tr.final_moments, ec);
      if (v == Variant::Ppg && model.v_encodings() != 0)
        fail(ErrorKind::Contract, "ppg-only run encoded fingerprints");
      rep.rows.push_back({v, user, ev.acc, ev.eer.eer});
      sum.acc += ev.acc;
      sum.eer += ev.eer.eer;
    }
    if (v == Variant::Ppg && image::pipeline_invocations() != pipeline_before)
      fail(ErrorKind::Contract, "ppg-only run invoked the image pipeline");
    sum.acc /= static_cast<double>(users.size());
    sum.eer /= static_cast<double>(users.size());
    rep.summary.push_back(sum);
  }
  return rep;
}

}  // namespace ppgfp::eval
