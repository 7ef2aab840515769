// ppgfp: synth, preprocess, train, evaluate, ablate and gradcheck over the C API.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ppgfp/ppgfp.h"

namespace {

// Status of a failed call, carried to main for the exit code.
struct Failure {
  ppgfp_status status;
};

void check(ppgfp_status s) {
  if (s != PPGFP_OK) throw Failure{s};
}

// Usage problem found by the CLI itself.
struct UsageError {
  std::string message;
};

struct Options {
  std::string config;
  std::string in;
  std::string out;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> target;
  std::string variant;
  std::vector<std::string> sets;
};

class Config {
 public:
  explicit Config(const Options& o) {
    check(o.config.empty() ? ppgfp_config_new(&cfg_) : ppgfp_config_load(o.config.c_str(), &cfg_));
    for (const auto& kv : o.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError{"--set expects KEY=VALUE, got '" + kv + "'"};
      set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed) set("seed", std::to_string(*o.seed));
    if (!o.variant.empty()) set("model.variant", o.variant);
    check(ppgfp_config_validate(cfg_));
  }
  ~Config() { ppgfp_config_free(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  const ppgfp_config* get() const { return cfg_; }

 private:
  ppgfp_config* cfg_ = nullptr;

  void set(const std::string& k, const std::string& v) { check(ppgfp_config_set(cfg_, k.c_str(), v.c_str())); }
};

void require(const std::string& value, const char* flag, const char* remedy) {
  if (value.empty()) throw UsageError{std::string("missing ") + flag + "; " + remedy};
}

std::int64_t target_of(const Options& o) { return o.target ? *o.target : -1; }

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void print_metrics(const std::vector<ppgfp_user_metrics>& rows) {
  double acc = 0.0, eer = 0.0;
  for (const auto& r : rows) {
    std::printf("user %zu  ACC %.4f  EER %.4f  threshold %.4f  genuine %zu  impostor %zu", r.user, r.acc, r.eer,
                r.threshold, r.genuine, r.impostor);
    if (!std::isnan(r.moment_cos)) std::printf("  moment_cos %.3f  impostor_cos %.3f", r.moment_cos, r.impostor_cos);
    std::printf("\n");
    acc += r.acc;
    eer += r.eer;
  }
  if (rows.size() > 1) std::printf("mean  ACC %.4f  EER %.4f\n", acc / rows.size(), eer / rows.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPG + fingerprint authentication: synthetic data, preprocessing, training and evaluation"};
  app.set_version_flag("--version", std::string(ppgfp_version()));
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", o.config, "key=value run config (desk preset when absent)");
    c->add_option("--set", o.sets, "override one config key, KEY=VALUE (repeatable)");
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "run seed (overrides the config)"); };
  auto add_target = [&](CLI::App* c) {
    c->add_option("--target-user", o.target, "train or evaluate one user only")->check(CLI::NonNegativeNumber);
  };

  auto* synth = app.add_subcommand("synth", "generate synthetic fingertip recordings");
  add_config(synth);
  add_seed(synth);
  synth->add_option("--out", o.out, "output directory");

  auto* prep = app.add_subcommand("preprocess", "extract beats and fingerprints from recordings");
  add_config(prep);
  add_seed(prep);
  prep->add_option("--in", o.in, "directory of recordings (synth output)");
  prep->add_option("--out", o.out, "output directory");

  auto* train = app.add_subcommand("train", "train one model per target user");
  add_config(train);
  add_seed(train);
  add_target(train);
  train->add_option("--in", o.in, "preprocessed data directory");
  train->add_option("--out", o.out, "output directory for checkpoints and loss logs");
  train->add_option("--variant", o.variant, "model variant")->check(CLI::IsMember({"ppg", "fingerprint", "fused"}));

  auto* evaluate = app.add_subcommand("evaluate", "score validation pairs with trained checkpoints");
  add_config(evaluate);
  add_target(evaluate);
  evaluate->add_option("--in", o.in, "preprocessed data directory used for training");
  evaluate->add_option("--model", o.model, "train output directory");
  evaluate->add_option("--out", o.out, "output directory for metrics");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate ppg, fingerprint and fused variants");
  add_config(ablate);
  add_seed(ablate);
  add_target(ablate);
  ablate->add_option("--in", o.in, "preprocessed data directory");
  ablate->add_option("--out", o.out, "output directory for the ablation table");

  auto* grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients on the tiny model");
  add_config(grad);
  add_seed(grad);
  grad->add_option("--out", o.out, "optional output directory for the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ppgfp: " << e.what() << "\nrun 'ppgfp --help' or 'ppgfp <command> --help' for usage\n";
    return 1;
  }

  try {
    const Config cfg(o);
    if (*synth) {
      require(o.out, "--out", "name the directory to write recordings into");
      check(ppgfp_synth(cfg.get(), o.out.c_str()));
      std::printf("wrote recordings to %s\n", o.out.c_str());
    } else if (*prep) {
      require(o.in, "--in", "pass a directory of recordings, e.g. the output of 'ppgfp synth'");
      require(o.out, "--out", "name the directory to write beats and fingerprints into");
      ppgfp_preprocess_summary s{};
      const auto st = ppgfp_preprocess(cfg.get(), o.in.c_str(), o.out.c_str(), &s);
      if (st == PPGFP_OK || st == PPGFP_ERR_DATA)
        std::printf("recordings %zu  failed %zu  samples %zu  (report: %s/report.csv)\n", s.recordings, s.failed,
                    s.samples, o.out.c_str());
      check(st);
    } else if (*train) {
      require(o.in, "--in", "pass the output directory of 'ppgfp preprocess'");
      require(o.out, "--out", "name the directory to write checkpoints into");
      check(ppgfp_train(cfg.get(), o.in.c_str(), target_of(o), o.out.c_str()));
      std::printf("wrote checkpoints and loss logs to %s\n", o.out.c_str());
    } else if (*evaluate) {
      require(o.in, "--in", "pass the preprocessed data directory the model was trained on");
      require(o.model, "--model", "pass the output directory of 'ppgfp train'");
      require(o.out, "--out", "name the directory to write metrics into");
      std::size_t n = 0;
      std::vector<ppgfp_user_metrics> rows(64);
      check(ppgfp_evaluate(cfg.get(), o.in.c_str(), o.model.c_str(), target_of(o), o.out.c_str(), rows.data(),
                           rows.size(), &n));
      if (n > rows.size()) {
        std::fprintf(stderr, "ppgfp: showing %zu of %zu users; see %s/metrics.csv\n", rows.size(), n, o.out.c_str());
        n = rows.size();
      }
      rows.resize(n);
      print_metrics(rows);
    } else if (*ablate) {
      require(o.in, "--in", "pass the output directory of 'ppgfp preprocess'");
      require(o.out, "--out", "name the directory to write the ablation table into");
      check(ppgfp_ablate(cfg.get(), o.in.c_str(), target_of(o), o.out.c_str()));
      std::fputs(slurp(o.out + "/ablation.txt").c_str(), stdout);
    } else if (*grad) {
      double err = 0.0;
      std::size_t checked = 0;
      check(ppgfp_gradcheck(cfg.get(), o.out.empty() ? nullptr : o.out.c_str(), &err, &checked));
      std::printf("max relative error %.3e over %zu parameter entries\n", err, checked);
      if (!(err < 1e-4)) {
        std::fprintf(stderr, "ppgfp: gradient check failed, max relative error %.3e >= 1e-4\n", err);
        return ppgfp_exit_code(PPGFP_ERR_NUMERIC);
      }
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "ppgfp: usage error: %s\n", e.message.c_str());
    return ppgfp_exit_code(PPGFP_ERR_USAGE);
  } catch (const Failure& f) {
    std::fprintf(stderr, "ppgfp: %s\n", ppgfp_last_error());
    return ppgfp_exit_code(f.status);
  }
  return 0;
}
