#include "ppgfp/config.hpp"

#include <cmath>
#include <functional>

#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"
#include "ppgfp/keyvalue.hpp"

namespace ppgfp {

namespace {

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string text(bool b) { return b ? "1" : "0"; }
std::string text(std::size_t n) { return std::to_string(n); }

// Helpers binding a key to a member reached through `ref`.
template <class Ref>
Field real(const char* key, Ref ref) {
  return {key, [=](RunConfig& c, const std::string& v) { ref(c) = parse_real(v, key); },
          [=](const RunConfig& c) { return format_real(ref(c)); }};
}

template <class Ref>
Field count(const char* key, Ref ref) {
  return {key, [=](RunConfig& c, const std::string& v) { ref(c) = parse_count(v, key); },
          [=](const RunConfig& c) { return text(ref(c)); }};
}

template <class Ref>
Field flag(const char* key, Ref ref) {
  return {key, [=](RunConfig& c, const std::string& v) { ref(c) = parse_flag(v, key); },
          [=](const RunConfig& c) { return text(ref(c)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"preset", [](RunConfig& c, const std::string& v) { c.preset = parse_preset(v); },
                 [](const RunConfig& c) { return to_string(c.preset); }});
    f.push_back({"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v, "seed"); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back(count("epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    f.push_back(count("batch", [](auto& c) -> auto& { return c.train.batch; }));
    f.push_back(real("lr", [](auto& c) -> auto& { return c.train.lr; }));
    f.push_back(real("tau", [](auto& c) -> auto& { return c.train.weights.tau; }));
    f.push_back(real("alpha", [](auto& c) -> auto& { return c.train.weights.alpha; }));
    f.push_back(real("beta", [](auto& c) -> auto& { return c.train.weights.beta; }));
    f.push_back(real("lambda_a", [](auto& c) -> auto& { return c.train.weights.lambda_a; }));
    f.push_back(real("lambda_s", [](auto& c) -> auto& { return c.train.weights.lambda_s; }));
    f.push_back(real("pairs.factor", [](auto& c) -> auto& { return c.train.pair_factor; }));
    f.push_back(real("pairs.negatives", [](auto& c) -> auto& { return c.train.negative_ratio; }));
    f.push_back({"split", [](RunConfig& c, const std::string& v) { c.train.split = train::parse_split(v); },
                 [](const RunConfig& c) { return train::to_string(c.train.split); }});
    f.push_back(real("split.train_fraction", [](auto& c) -> auto& { return c.train.train_fraction; }));
    f.push_back(flag("aug.ppg_scale", [](auto& c) -> auto& { return c.train.aug.ppg_scale; }));
    f.push_back(flag("aug.ppg_jitter", [](auto& c) -> auto& { return c.train.aug.ppg_jitter; }));
    f.push_back(flag("aug.ppg_stretch", [](auto& c) -> auto& { return c.train.aug.ppg_stretch; }));
    f.push_back(flag("aug.fp_flip", [](auto& c) -> auto& { return c.train.aug.fp_flip; }));
    f.push_back(flag("aug.fp_rotate", [](auto& c) -> auto& { return c.train.aug.fp_rotate; }));
    f.push_back(flag("aug.fp_crop", [](auto& c) -> auto& { return c.train.aug.fp_crop; }));
    f.push_back(flag("aug.fp_noise", [](auto& c) -> auto& { return c.train.aug.fp_noise; }));
    // Both encoders share width, state size and depth.
    f.push_back({"model.width",
                 [](RunConfig& c, const std::string& v) { c.model.enc_u.width = c.model.enc_v.width = parse_count(v, "model.width"); },
                 [](const RunConfig& c) { return text(c.model.enc_u.width); }});
    f.push_back({"model.state_dim",
                 [](RunConfig& c, const std::string& v) {
                   c.model.enc_u.state_dim = c.model.enc_v.state_dim = parse_count(v, "model.state_dim");
                 },
                 [](const RunConfig& c) { return text(c.model.enc_u.state_dim); }});
    f.push_back({"model.blocks",
                 [](RunConfig& c, const std::string& v) { c.model.enc_u.blocks = c.model.enc_v.blocks = parse_count(v, "model.blocks"); },
                 [](const RunConfig& c) { return text(c.model.enc_u.blocks); }});
    f.push_back(count("model.heads", [](auto& c) -> auto& { return c.model.heads; }));
    f.push_back(count("model.u_chunk", [](auto& c) -> auto& { return c.model.enc_u.chunk; }));
    f.push_back(count("model.v_chunk", [](auto& c) -> auto& { return c.model.enc_v.chunk; }));
    f.push_back(flag("model.per_head_scale", [](auto& c) -> auto& { return c.model.per_head_scale; }));
    f.push_back({"model.variant", [](RunConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
                 [](const RunConfig& c) { return to_string(c.model.variant); }});
    f.push_back(real("signal.detrend_s", [](auto& c) -> auto& { return c.preprocess.signal.detrend_s; }));
    f.push_back(real("signal.cutoff_hz", [](auto& c) -> auto& { return c.preprocess.signal.cutoff_hz; }));
    f.push_back(real("signal.valley_spacing", [](auto& c) -> auto& { return c.preprocess.signal.valley_spacing; }));
    f.push_back(real("signal.min_corr", [](auto& c) -> auto& { return c.preprocess.signal.min_corr; }));
    f.push_back(real("image.clahe_clip", [](auto& c) -> auto& { return c.preprocess.image.clahe_clip; }));
    f.push_back(count("image.clahe_tiles", [](auto& c) -> auto& { return c.preprocess.image.clahe_tiles; }));
    f.push_back(real("image.canny_lo", [](auto& c) -> auto& { return c.preprocess.image.canny_lo; }));
    f.push_back(real("image.canny_hi", [](auto& c) -> auto& { return c.preprocess.image.canny_hi; }));
    f.push_back(count("image.frame_stride", [](auto& c) -> auto& { return c.preprocess.image.frame_stride; }));
    f.push_back(count("synth.subjects", [](auto& c) -> auto& { return c.synth.subjects; }));
    f.push_back(count("synth.recordings", [](auto& c) -> auto& { return c.synth.recordings; }));
    f.push_back(real("synth.duration_s", [](auto& c) -> auto& { return c.synth.duration_s; }));
    f.push_back(real("synth.fps", [](auto& c) -> auto& { return c.synth.fps; }));
    f.push_back(count("synth.size", [](auto& c) -> auto& { return c.synth.size; }));
    f.push_back(real("synth.separability", [](auto& c) -> auto& { return c.synth.separability; }));
    f.push_back(real("synth.depth", [](auto& c) -> auto& { return c.synth.video.depth; }));
    f.push_back(real("synth.pixel_noise", [](auto& c) -> auto& { return c.synth.video.pixel_noise; }));
    f.push_back({"eval.eer", [](RunConfig& c, const std::string& v) { c.eval.mode = eval::parse_eer_mode(v); },
                 [](const RunConfig& c) { return eval::to_string(c.eval.mode); }});
    // "eer" selects the per-user EER threshold; a number fixes the threshold.
    f.push_back({"eval.threshold",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "eer") c.eval.threshold.reset();
                   else c.eval.threshold = parse_real(v, "eval.threshold");
                 },
                 [](const RunConfig& c) { return c.eval.threshold ? format_real(*c.eval.threshold) : std::string("eer"); }});
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

}  // namespace

Preset parse_preset(const std::string& s) {
  if (s == "desk") return Preset::Desk;
  if (s == "full") return Preset::Full;
  fail(ErrorKind::Config, "preset must be 'desk' or 'full', got '" + s + "'");
}

std::string to_string(Preset p) { return p == Preset::Desk ? "desk" : "full"; }

RunConfig RunConfig::defaults(Preset p) {
  RunConfig c;
  c.preset = p;
  if (p == Preset::Desk) {
    c.model.enc_u = {32, 16, 2, 300, 5};
    c.model.enc_v = {32, 16, 2, 4096, 64};
    c.train.epochs = 40;
    c.train.batch = 64;
  }
  return c;
}

void RunConfig::set(std::string_view key, const std::string& value) {
  const auto* f = find_field(key);
  if (!f) fail(ErrorKind::Config, "unknown config key '" + std::string(key) + "'");
  if (key == "preset") {
    // A preset replaces every preset-dependent value, keeping the seed.
    const auto s = seed;
    *this = defaults(parse_preset(value));
    seed = s;
    return;
  }
  f->set(*this, value);
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  preprocess.validate();
  synth.validate();
  if (eval.threshold && !std::isfinite(*eval.threshold)) fail(ErrorKind::Config, "eval.threshold must be finite");
}

std::string RunConfig::to_text() const {
  KeyValues kv;
  for (const auto& f : fields()) kv.set(f.key, f.get(*this));
  return format_key_values(kv);
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

RunConfig parse_run_config(std::string_view text, std::string_view source) {
  const auto kv = parse_key_values(text, source);
  auto c = RunConfig::defaults();
  if (const auto* p = kv.find("preset")) c.set("preset", *p);
  for (const auto& [k, v] : kv.entries) {
    if (k == "preset") continue;
    try {
      c.set(k, v);
    } catch (const Error& e) {
      fail(e.kind(), std::string(source) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path), path.string());
}

}  // namespace ppgfp
