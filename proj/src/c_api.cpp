#include "ppgfp/ppgfp.h"

#include <cstdio>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "ppgfp/config.hpp"
#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"
#include "ppgfp/rng.hpp"
#include "ppgfp/run.hpp"
#include "ppgfp/trainer.hpp"

struct ppgfp_config {
  ppgfp::RunConfig cfg;
};

struct ppgfp_model {
  ppgfp::Model model;
};

namespace {

thread_local std::string g_last_error;

ppgfp_status status_of(ppgfp::ErrorKind k) {
  using ppgfp::ErrorKind;
  switch (k) {
    case ErrorKind::Input: return PPGFP_ERR_INPUT;
    case ErrorKind::Config: return PPGFP_ERR_CONFIG;
    case ErrorKind::Dimension: return PPGFP_ERR_DIMENSION;
    case ErrorKind::Quality: return PPGFP_ERR_QUALITY;
    case ErrorKind::Numeric: return PPGFP_ERR_NUMERIC;
    case ErrorKind::Data: return PPGFP_ERR_DATA;
    case ErrorKind::Metric: return PPGFP_ERR_METRIC;
    case ErrorKind::Io: return PPGFP_ERR_IO;
    case ErrorKind::Contract: return PPGFP_ERR_CONTRACT;
    case ErrorKind::Usage: return PPGFP_ERR_USAGE;
  }
  return PPGFP_ERR_INTERNAL;
}

// Runs `f`, translating every exception into a status and the thread's last error.
template <class F>
ppgfp_status guard(F&& f) noexcept {
  try {
    f();
    return PPGFP_OK;
  } catch (const ppgfp::Error& e) {
    g_last_error = std::string(ppgfp::to_string(e.kind())) + ": " + e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return PPGFP_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (!p) ppgfp::fail(ppgfp::ErrorKind::Input, std::string(what) + " must not be NULL");
}

std::optional<std::size_t> target_of(int64_t t) {
  if (t < 0) return std::nullopt;
  return static_cast<std::size_t>(t);
}

}  // namespace

extern "C" {

int ppgfp_exit_code(ppgfp_status status) {
  switch (status) {
    case PPGFP_OK: return 0;
    case PPGFP_ERR_CONFIG:
    case PPGFP_ERR_USAGE: return 1;
    case PPGFP_ERR_NUMERIC: return 3;
    default: return 2;
  }
}

const char* ppgfp_status_name(ppgfp_status status) {
  switch (status) {
    case PPGFP_OK: return "ok";
    case PPGFP_ERR_INPUT: return "input error";
    case PPGFP_ERR_CONFIG: return "config error";
    case PPGFP_ERR_DIMENSION: return "dimension error";
    case PPGFP_ERR_QUALITY: return "quality error";
    case PPGFP_ERR_NUMERIC: return "numeric guard error";
    case PPGFP_ERR_DATA: return "data error";
    case PPGFP_ERR_METRIC: return "metric error";
    case PPGFP_ERR_IO: return "io error";
    case PPGFP_ERR_CONTRACT: return "contract error";
    case PPGFP_ERR_USAGE: return "usage error";
    case PPGFP_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* ppgfp_last_error(void) { return g_last_error.c_str(); }

const char* ppgfp_version(void) { return ppgfp::run::version(); }

ppgfp_status ppgfp_config_new(ppgfp_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new ppgfp_config{ppgfp::RunConfig::defaults()};
  });
}

ppgfp_status ppgfp_config_load(const char* path, ppgfp_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new ppgfp_config{ppgfp::load_run_config(path)};
  });
}

ppgfp_status ppgfp_config_set(ppgfp_config* cfg, const char* key, const char* value) {
  return guard([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    auto next = cfg->cfg;  // a rejected value leaves the config untouched
    next.set(key, value);
    cfg->cfg = next;
  });
}

ppgfp_status ppgfp_config_get(const ppgfp_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(cfg, "cfg");
    need(key, "key");
    const auto kv = ppgfp::parse_key_values(cfg->cfg.to_text());
    const auto* v = kv.find(key);
    if (!v) ppgfp::fail(ppgfp::ErrorKind::Config, "unknown config key '" + std::string(key) + "'");
    if (needed) *needed = v->size() + 1;
    if (buf && cap > v->size()) std::memcpy(buf, v->c_str(), v->size() + 1);
    else if (buf && cap > 0) buf[0] = '\0';
  });
}

ppgfp_status ppgfp_config_validate(const ppgfp_config* cfg) {
  return guard([&] {
    need(cfg, "cfg");
    cfg->cfg.validate();
  });
}

void ppgfp_config_free(ppgfp_config* cfg) { delete cfg; }

ppgfp_status ppgfp_synth(const ppgfp_config* cfg, const char* out_dir) {
  return guard([&] {
    need(cfg, "cfg");
    need(out_dir, "out_dir");
    ppgfp::run::synth(cfg->cfg, out_dir);
  });
}

ppgfp_status ppgfp_preprocess(const ppgfp_config* cfg, const char* in_dir, const char* out_dir,
                              ppgfp_preprocess_summary* summary) {
  return guard([&] {
    need(cfg, "cfg");
    need(in_dir, "in_dir");
    need(out_dir, "out_dir");
    const auto s = ppgfp::run::preprocess(cfg->cfg, in_dir, out_dir);
    if (summary) *summary = {s.recordings, s.failed, s.samples};
  });
}

ppgfp_status ppgfp_train(const ppgfp_config* cfg, const char* data_dir, int64_t target_user, const char* out_dir) {
  return guard([&] {
    need(cfg, "cfg");
    need(data_dir, "data_dir");
    need(out_dir, "out_dir");
    ppgfp::run::train(cfg->cfg, data_dir, target_of(target_user), out_dir);
  });
}

ppgfp_status ppgfp_evaluate(const ppgfp_config* cfg, const char* data_dir, const char* model_dir, int64_t target_user,
                            const char* out_dir, ppgfp_user_metrics* rows, size_t cap, size_t* count) {
  return guard([&] {
    need(cfg, "cfg");
    need(data_dir, "data_dir");
    need(model_dir, "model_dir");
    need(out_dir, "out_dir");
    if (cap > 0) need(rows, "rows");
    const auto evals = ppgfp::run::evaluate(cfg->cfg, data_dir, model_dir, target_of(target_user), out_dir);
    if (count) *count = evals.size();
    for (std::size_t i = 0; i < evals.size() && i < cap; ++i) {
      const auto& e = evals[i];
      rows[i] = {e.user, e.acc, e.eer.eer, e.threshold, e.moment_cos, e.impostor_cos, e.scores.genuine(),
                 e.scores.impostor()};
    }
  });
}

ppgfp_status ppgfp_ablate(const ppgfp_config* cfg, const char* data_dir, int64_t target_user, const char* out_dir) {
  return guard([&] {
    need(cfg, "cfg");
    need(data_dir, "data_dir");
    need(out_dir, "out_dir");
    ppgfp::run::ablate(cfg->cfg, data_dir, target_of(target_user), out_dir);
  });
}

ppgfp_status ppgfp_gradcheck(const ppgfp_config* cfg, const char* out_dir, double* max_rel_error, size_t* checked) {
  return guard([&] {
    need(cfg, "cfg");
    std::optional<std::filesystem::path> out;
    if (out_dir) out = out_dir;
    const auto rep = ppgfp::run::gradcheck(cfg->cfg, out);
    if (max_rel_error) *max_rel_error = rep.max_rel;
    if (checked) *checked = rep.checked;
  });
}

ppgfp_status ppgfp_model_load(const char* model_dir, size_t user, ppgfp_model** out) {
  return guard([&] {
    need(model_dir, "model_dir");
    need(out, "out");
    *out = nullptr;
    const std::filesystem::path dir(model_dir);
    const auto cfg = ppgfp::run::read_run_config(dir);
    char name[32];
    std::snprintf(name, sizeof name, "user_%02zu", user);
    const auto ckpt = dir / name / "checkpoint.bin";
    if (!std::filesystem::exists(ckpt))
      ppgfp::fail(ppgfp::ErrorKind::Usage, ckpt.string() + " is missing; train user " + std::to_string(user) + " first");
    std::unique_ptr<ppgfp_model> m(new ppgfp_model{ppgfp::Model(cfg.model, ppgfp::derive_seed(cfg.seed, user))});
    ppgfp::train::load_checkpoint(ckpt, m->model);
    *out = m.release();
  });
}

size_t ppgfp_model_beat_length(const ppgfp_model* model) {
  return model ? model->model.config().enc_u.input_len : 0;
}

size_t ppgfp_model_fingerprint_length(const ppgfp_model* model) {
  return model ? model->model.config().enc_v.input_len : 0;
}

ppgfp_status ppgfp_model_score(ppgfp_model* model, const double* beat, size_t beat_len, const double* fingerprint,
                               size_t fingerprint_len, double* score) {
  return guard([&] {
    need(model, "model");
    need(score, "score");
    const auto& mc = model->model.config();
    if (mc.uses_ppg()) need(beat, "beat");
    if (mc.uses_fingerprint()) need(fingerprint, "fingerprint");
    const std::span<const double> b = beat ? std::span<const double>(beat, beat_len) : std::span<const double>();
    const std::span<const double> f =
        fingerprint ? std::span<const double>(fingerprint, fingerprint_len) : std::span<const double>();
    *score = model->model.score(b, f);
  });
}

void ppgfp_model_free(ppgfp_model* model) { delete model; }

}  // extern "C"
