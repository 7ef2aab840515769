#include "ppgfp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"
#include "ppgfp/keyvalue.hpp"
#include "ppgfp/rng.hpp"

namespace ppgfp::train {

namespace {

constexpr std::size_t kSide = image::kFingerprintSize;
constexpr std::size_t kMinTargetSamples = 10;

double bilinear(std::span<const double> img, std::size_t side, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const auto ix = static_cast<std::ptrdiff_t>(fx), iy = static_cast<std::ptrdiff_t>(fy);
  const auto s = static_cast<std::ptrdiff_t>(side);
  auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    return (r < 0 || c < 0 || r >= s || c >= s) ? 0.0 : img[static_cast<std::size_t>(r * s + c)];
  };
  return (1.0 - ay) * ((1.0 - ax) * at(iy, ix) + ax * at(iy, ix + 1)) + ay * ((1.0 - ax) * at(iy + 1, ix) + ax * at(iy + 1, ix + 1));
}

void minmax_normalize(std::vector<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double a = *lo, r = *hi - *lo;
  if (!(r > 1e-12)) fail(ErrorKind::Numeric, "augment_ppg: augmented beat is constant");
  for (auto& v : x) v = (v - a) / r;
}

std::size_t count_positive(std::span<const Pair> pairs) {
  return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [](const Pair& p) { return p.positive; }));
}

bool all_finite(const Tensor& t) { return t.all_finite(); }

}  // namespace

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.ppg_scale = c.ppg_jitter = c.ppg_stretch = false;
  c.fp_flip = c.fp_rotate = c.fp_crop = c.fp_noise = false;
  return c;
}

std::vector<double> augment_ppg(std::span<const double> beat, const AugmentConfig& cfg, std::uint64_t seed) {
  std::vector<double> x(beat.begin(), beat.end());
  if (!cfg.ppg_scale && !cfg.ppg_jitter && !cfg.ppg_stretch) return x;
  if (x.size() < 8) fail(ErrorKind::Input, "augment_ppg: beat shorter than 8 samples");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> stretch(0.95, 1.05), scale(0.9, 1.1);
  std::normal_distribution<double> noise(0.0, 0.01);
  const std::size_t n = x.size();
  if (cfg.ppg_stretch) {
    // Stretch about the centre, then crop or edge-pad back to n samples.
    const auto m = static_cast<std::size_t>(std::lround(static_cast<double>(n) * stretch(rng)));
    const auto z = signal::spline_resample(x, std::max<std::size_t>(m, 2));
    const auto off = (static_cast<std::ptrdiff_t>(z.size()) - static_cast<std::ptrdiff_t>(n)) / 2;
    for (std::size_t t = 0; t < n; ++t) {
      const auto k = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) + off, 0, static_cast<std::ptrdiff_t>(z.size()) - 1);
      x[t] = z[static_cast<std::size_t>(k)];
    }
  }
  if (cfg.ppg_scale) {
    const double a = scale(rng);
    for (auto& v : x) v *= a;
  }
  if (cfg.ppg_jitter)
    for (auto& v : x) v += noise(rng);
  minmax_normalize(x);
  return x;
}

std::vector<double> flip_horizontal(std::span<const double> img, std::size_t side) {
  if (img.size() != side * side) fail(ErrorKind::Dimension, "flip_horizontal: image is not square");
  std::vector<double> out(img.size());
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) out[r * side + c] = img[r * side + (side - 1 - c)];
  return out;
}

std::vector<double> rotate(std::span<const double> img, std::size_t side, double degrees) {
  if (img.size() != side * side) fail(ErrorKind::Dimension, "rotate: image is not square");
  const double t = degrees * std::numbers::pi / 180.0, c = std::cos(t), s = std::sin(t);
  const double mid = (static_cast<double>(side) - 1.0) / 2.0;
  std::vector<double> out(img.size());
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t k = 0; k < side; ++k) {
      // Inverse map: sample the source at the output position rotated back.
      const double dx = static_cast<double>(k) - mid, dy = static_cast<double>(r) - mid;
      out[r * side + k] = bilinear(img, side, mid + c * dx + s * dy, mid - s * dx + c * dy);
    }
  return out;
}

std::vector<double> crop_resize(std::span<const double> img, std::size_t side, double x0, double y0, double crop_side) {
  if (img.size() != side * side) fail(ErrorKind::Dimension, "crop_resize: image is not square");
  const double S = static_cast<double>(side);
  if (!(crop_side > 0.0 && x0 >= 0.0 && y0 >= 0.0 && x0 + crop_side <= S && y0 + crop_side <= S))
    fail(ErrorKind::Config, "crop_resize: crop window outside the image");
  std::vector<double> out(img.size());
  const double step = crop_side / S;
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t k = 0; k < side; ++k) {
      const double x = std::clamp(x0 + (static_cast<double>(k) + 0.5) * step - 0.5, 0.0, S - 1.0);
      const double y = std::clamp(y0 + (static_cast<double>(r) + 0.5) * step - 0.5, 0.0, S - 1.0);
      out[r * side + k] = bilinear(img, side, x, y);
    }
  return out;
}

std::vector<double> augment_fingerprint(std::span<const double> fp, const AugmentConfig& cfg, std::uint64_t seed) {
  if (fp.size() != kSide * kSide) fail(ErrorKind::Dimension, "augment_fingerprint: expected 64x64");
  std::vector<double> x(fp.begin(), fp.end());
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> angle(-10.0, 10.0), area(0.9, 1.0), u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  // Every toggle consumes the same draws whether or not it fires, so one
  // toggle never shifts the randomness of another.
  const bool do_flip = coin(rng), do_rot = coin(rng), do_crop = coin(rng), do_noise = coin(rng);
  const double deg = angle(rng), frac = area(rng), ox = u(rng), oy = u(rng);
  if (cfg.fp_flip && do_flip) x = flip_horizontal(x, kSide);
  if (cfg.fp_rotate && do_rot) x = rotate(x, kSide, deg);
  if (cfg.fp_crop && do_crop) {
    const double S = static_cast<double>(kSide), c = S * std::sqrt(frac);
    x = crop_resize(x, kSide, ox * (S - c), oy * (S - c), c);
  }
  if (cfg.fp_noise && do_noise)
    for (auto& v : x) v = std::clamp(v + noise(rng), 0.0, 1.0);
  return x;
}

SplitMode parse_split(const std::string& s) {
  if (s == "beats") return SplitMode::Beats;
  if (s == "sessions") return SplitMode::Sessions;
  fail(ErrorKind::Config, "split must be 'beats' or 'sessions', got '" + s + "'");
}

std::string to_string(SplitMode m) { return m == SplitMode::Beats ? "beats" : "sessions"; }

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Config, "epochs must be at least 1");
  if (batch < 2) fail(ErrorKind::Config, "batch must be at least 2");
  if (!(lr > 0.0)) fail(ErrorKind::Config, "lr must be positive");
  if (!(pair_factor > 0.0)) fail(ErrorKind::Config, "pairs.factor must be positive");
  if (!(negative_ratio > 0.0)) fail(ErrorKind::Config, "pairs.negatives must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail(ErrorKind::Config, "split.train_fraction must lie in (0, 1)");
  weights.validate();
}

Split make_split(const data::Dataset& ds, SplitMode mode, double train_fraction, std::uint64_t seed) {
  Split s;
  if (mode == SplitMode::Sessions) {
    const auto sessions = ds.sessions();
    if (sessions.size() < 2) fail(ErrorKind::Data, "session split needs at least two sessions");
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      (ds.samples[i].session == sessions.front() ? s.train : s.validation).push_back(i);
    return s;
  }
  for (auto user : ds.users()) {
    auto ids = ds.ids_of(user);
    std::mt19937_64 rng(derive_seed(seed, 0x5b117, user));
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto cut = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(ids.size())));
    s.train.insert(s.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut));
    s.validation.insert(s.validation.end(), ids.begin() + static_cast<std::ptrdiff_t>(cut), ids.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

std::vector<Pair> make_pairs(const data::Dataset& ds, std::size_t target, std::span<const std::size_t> pool, double factor,
                             double negative_ratio, std::mt19937_64& rng) {
  std::vector<std::size_t> mine;
  std::map<std::size_t, std::vector<std::size_t>> others;
  for (auto id : pool) {
    if (id >= ds.samples.size()) fail(ErrorKind::Contract, "make_pairs: sample id out of range");
    const auto u = ds.samples[id].user;
    (u == target ? mine : others[u]).push_back(id);
  }
  if (mine.size() < kMinTargetSamples) {
    fail(ErrorKind::Data, "target user " + std::to_string(target) + " has " + std::to_string(mine.size()) +
                              " training beats; at least 10 are needed");
  }
  if (others.empty()) fail(ErrorKind::Data, "no impostor samples: negatives need at least one other user");

  const std::size_t n = mine.size();
  const auto want = static_cast<std::size_t>(std::lround(factor * static_cast<double>(n)));
  const std::size_t n_pos = std::min(want, n * n);
  std::vector<std::size_t> cells(n * n);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  // Partial Fisher-Yates: the first n_pos cells are a uniform draw without replacement.
  for (std::size_t i = 0; i < n_pos; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, cells.size() - 1);
    std::swap(cells[i], cells[pick(rng)]);
  }
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < n_pos; ++i) pairs.push_back({mine[cells[i] / n], mine[cells[i] % n], true});

  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<std::size_t> all_others;
  for (const auto& [u, ids] : others) {
    groups.push_back(&ids);
    all_others.insert(all_others.end(), ids.begin(), ids.end());
  }
  auto any_of = [&](const std::vector<std::size_t>& v) {
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    return v[pick(rng)];
  };
  const auto n_neg = static_cast<std::size_t>(std::lround(negative_ratio * static_cast<double>(n_pos)));
  const std::size_t same = (n_neg + 1) / 2;
  std::uniform_int_distribution<std::size_t> pick_group(0, groups.size() - 1);
  for (std::size_t i = 0; i < n_neg; ++i) {
    if (i < same) {
      const auto& g = *groups[pick_group(rng)];
      const auto b = any_of(g);
      pairs.push_back({b, any_of(g), false});
    } else if ((i - same) % 2 == 0) {
      const auto b = any_of(mine);
      pairs.push_back({b, any_of(all_others), false});
    } else {
      const auto b = any_of(all_others);
      pairs.push_back({b, any_of(mine), false});
    }
  }
  return pairs;
}

std::vector<std::vector<Pair>> make_batches(std::span<const Pair> pairs, std::size_t batch, std::mt19937_64& rng) {
  if (batch < 2) fail(ErrorKind::Config, "batch must be at least 2");
  std::vector<Pair> pos, neg;
  for (const auto& p : pairs) (p.positive ? pos : neg).push_back(p);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const std::size_t total = pairs.size();
  const std::size_t k = std::max<std::size_t>(1, (total + batch - 1) / batch);
  std::vector<std::vector<Pair>> out(k);
  for (std::size_t b = 0; b < k; ++b) {
    auto& dst = out[b];
    for (std::size_t i = pos.size() * b / k; i < pos.size() * (b + 1) / k; ++i) dst.push_back(pos[i]);
    for (std::size_t i = neg.size() * b / k; i < neg.size() * (b + 1) / k; ++i) dst.push_back(neg[i]);
    std::shuffle(dst.begin(), dst.end(), rng);
  }
  return out;
}

BatchLoss batch_loss(Model& model, ad::Tape& tape, std::span<const BatchItem> items, const loss::Moments& prev,
                     const loss::LossWeights& w, double pos_weight) {
  const auto& mc = model.config();
  std::map<std::size_t, ad::Var> cache_u, cache_v;
  std::vector<ad::Var> logits, pos_u, pos_v, neg_u, neg_v;
  std::vector<double> labels;
  for (const auto& it : items) {
    std::optional<ad::Var> gu, gv;
    if (mc.uses_ppg()) {
      auto [pos, fresh] = cache_u.try_emplace(it.beat_key);
      if (fresh) pos->second = model.encode_u(tape, it.beat);
      gu = pos->second;
    }
    if (mc.uses_fingerprint()) {
      auto [pos, fresh] = cache_v.try_emplace(it.fingerprint_key);
      if (fresh) pos->second = model.encode_v(tape, it.fingerprint);
      gv = pos->second;
    }
    const auto lat = model.head(tape, gu, gv);
    logits.push_back(lat.logit);
    labels.push_back(it.positive ? 1.0 : 0.0);
    if (lat.u && lat.v) {
      (it.positive ? pos_u : neg_u).push_back(*lat.u);
      (it.positive ? pos_v : neg_v).push_back(*lat.v);
    }
  }
  BatchLoss out;
  out.l_c = ad::weighted_bce(ad::stack_rows(logits), labels, pos_weight);
  const auto zero = [&] { return tape.constant(Tensor::scalar(0.0)); };
  out.l_a = zero();
  out.l_s = zero();
  if (!pos_u.empty()) {
    const auto mean_u = loss::batch_mean(pos_u), mean_v = loss::batch_mean(pos_v);
    out.mean_u = mean_u.value();
    out.mean_v = mean_v.value();
    out.mu_u = loss::ema_update(tape, prev.mu_u, mean_u, w.alpha);
    out.mu_v = loss::ema_update(tape, prev.mu_v, mean_v, w.beta);
    if (w.lambda_a > 0.0 && !neg_u.empty()) out.l_a = loss::alignment_loss(out.mu_u, out.mu_v, neg_u, neg_v, w.tau);
    if (w.lambda_s > 0.0) out.l_s = loss::spread_loss(pos_u, pos_v, out.mu_u, out.mu_v);
  } else {
    out.mean_u = Tensor(prev.mu_u.shape());
    out.mean_v = Tensor(prev.mu_v.shape());
    out.mu_u = tape.constant(prev.mu_u);
    out.mu_v = tape.constant(prev.mu_v);
  }
  out.total = loss::total_loss(out.l_c, out.l_a, out.l_s, w);
  return out;
}

TrainResult train_user(Model& model, const data::Dataset& ds, const Split& split, std::size_t target,
                       const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  const auto& mc = model.config();
  if (mc.uses_fingerprint() && !ds.has_fingerprints()) fail(ErrorKind::Data, "model needs fingerprints the dataset lacks");
  const std::set<std::size_t> held_out(split.validation.begin(), split.validation.end());
  for (auto id : split.train)
    if (held_out.count(id)) fail(ErrorKind::Contract, "split: a sample is on both sides");

  const bool fused = mc.variant == Variant::Fused;
  const std::size_t d = mc.width();
  TrainResult res;
  loss::Moments mu = loss::Moments::zeros(d);
  ad::AdamState adam;
  const ad::AdamConfig adam_cfg{cfg.lr};
  auto params = model.parameters();
  std::set<std::size_t> used;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x9a125, epoch));
    auto pairs = make_pairs(ds, target, split.train, cfg.pair_factor, cfg.negative_ratio, rng);
    if (!fused) {
      // One-modality models only see one side, so a mixed negative would carry a target sample.
      for (auto& p : pairs)
        if (!p.positive && ds.samples[p.beat].user != ds.samples[p.fingerprint].user) {
          if (ds.samples[p.beat].user == target) p.beat = p.fingerprint;
          else p.fingerprint = p.beat;
        }
    }
    const double n_pos = static_cast<double>(count_positive(pairs));
    res.pos_weight = (static_cast<double>(pairs.size()) - n_pos) / n_pos;
    const auto batches = make_batches(pairs, cfg.batch, rng);

    for (std::size_t k = 0; k < batches.size(); ++k) {
      const auto& b = batches[k];
      const bool has_positive = count_positive(b) > 0;
      std::map<std::size_t, std::vector<double>> beats, fps;
      std::vector<BatchItem> items;
      for (const auto& p : b) {
        auto& beat = beats[p.beat];
        if (beat.empty() && mc.uses_ppg())
          beat = augment_ppg(ds.samples[p.beat].beat, cfg.aug, derive_seed(cfg.seed, epoch, p.beat, 1));
        auto& fp = fps[p.fingerprint];
        if (fp.empty() && mc.uses_fingerprint())
          fp = augment_fingerprint(ds.samples[p.fingerprint].fingerprint, cfg.aug,
                                   derive_seed(cfg.seed, epoch, p.fingerprint, 2));
      }
      for (const auto& p : b) {
        items.push_back({beats[p.beat], fps[p.fingerprint], p.beat, p.fingerprint, p.positive});
        if (mc.uses_ppg()) used.insert(p.beat);
        if (mc.uses_fingerprint()) used.insert(p.fingerprint);
      }

      ad::Tape tape;
      const auto bl = batch_loss(model, tape, items, mu, cfg.weights, res.pos_weight);
      const double l = bl.total.item();
      if (!std::isfinite(l)) fail(ErrorKind::Numeric, "training diverged: non-finite loss");
      for (auto* p : params) p->zero_grad();
      tape.backward(bl.total);
      for (auto* p : params)
        if (!all_finite(p->grad)) fail(ErrorKind::Numeric, "training diverged: non-finite gradient in " + p->name);
      ad::adam_step(params, adam, adam_cfg);
      model.project_stable();

      res.losses.push_back({epoch, k, bl.l_c.item(), bl.l_a.item(), bl.l_s.item(), l});
      if (!fused) continue;
      if (!has_positive) {
        ++res.moment_skips;  // moments pass through unchanged
        continue;
      }
      res.moments.push_back({epoch, k, mu.mu_u, mu.mu_v, bl.mean_u, bl.mean_v, bl.mu_u.value(), bl.mu_v.value()});
      mu = {bl.mu_u.value(), bl.mu_v.value()};
    }
  }
  res.final_moments = mu;
  res.used_ids.assign(used.begin(), used.end());
  for (auto id : res.used_ids)
    if (held_out.count(id)) fail(ErrorKind::Contract, "a validation sample entered a gradient step");
  return res;
}

std::string losses_csv(std::span<const LossRow> rows) {
  std::ostringstream out;
  out << "epoch,batch,L_C,L_A,L_S,L\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << r.batch << ',' << format_real(r.l_c) << ',' << format_real(r.l_a) << ','
        << format_real(r.l_s) << ',' << format_real(r.l) << '\n';
  return out.str();
}

std::string moments_csv(std::span<const MomentRow> rows) {
  std::ostringstream out;
  out << "epoch,batch,quantity,values\n";
  auto line = [&](const MomentRow& r, const char* name, const Tensor& t) {
    out << r.epoch << ',' << r.batch << ',' << name << ',';
    for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << format_real(t[i]);
    out << '\n';
  };
  for (const auto& r : rows) {
    line(r, "prev_u", r.prev_u);
    line(r, "prev_v", r.prev_v);
    line(r, "mean_u", r.mean_u);
    line(r, "mean_v", r.mean_v);
    line(r, "mu_u", r.mu_u);
    line(r, "mu_v", r.mu_v);
  }
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const loss::Moments& moments) {
  auto tensors = model.state();
  tensors.push_back({"moments.mu_u", moments.mu_u, DType::F64});
  tensors.push_back({"moments.mu_v", moments.mu_v, DType::F64});
  write_container(path, tensors);
}

loss::Moments load_checkpoint(const std::filesystem::path& path, Model& model) {
  auto tensors = read_container(path);
  loss::Moments m{find_tensor(tensors, "moments.mu_u").tensor, find_tensor(tensors, "moments.mu_v").tensor};
  std::erase_if(tensors, [](const NamedTensor& t) { return t.name.starts_with("moments."); });
  model.load_state(tensors);
  return m;
}

}  // namespace ppgfp::train
