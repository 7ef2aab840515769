#include "ppgfp/run.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"
#include "ppgfp/rng.hpp"
#include "ppgfp/synth.hpp"
#include "ppgfp/trainer.hpp"

namespace fs = std::filesystem;

namespace ppgfp::run {

namespace {

constexpr const char* kCheckpoint = "checkpoint.bin";

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void require_dir(const fs::path& dir, const std::string& what, const std::string& remedy) {
  if (!fs::is_directory(dir))
    fail(ErrorKind::Usage, what + " " + dir.string() + " does not exist; " + remedy);
}

std::string user_dir(std::size_t user) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "user_%02zu", user);
  return buf;
}

data::Dataset load_data(const fs::path& dir) {
  require_dir(dir, "data directory", "run preprocess first and pass its output with --in");
  auto ds = data::load_dataset(dir);
  if (ds.samples.empty())
    fail(ErrorKind::Usage, "no preprocessed recordings under " + dir.string() + "; run preprocess first and pass its output with --in");
  ds.validate();
  return ds;
}

std::vector<std::size_t> targets(const data::Dataset& ds, std::optional<std::size_t> target) {
  auto users = ds.users();
  if (!target) return users;
  if (!std::binary_search(users.begin(), users.end(), *target))
    fail(ErrorKind::Usage, "target user " + std::to_string(*target) + " is not in the dataset");
  return {*target};
}

train::TrainConfig train_config(const RunConfig& cfg) {
  auto tc = cfg.train;
  tc.seed = cfg.seed;
  return tc;
}

train::Split split_of(const RunConfig& cfg, const data::Dataset& ds) {
  return train::make_split(ds, cfg.train.split, cfg.train.train_fraction, cfg.seed);
}

std::string join(std::span<const std::size_t> xs) {
  std::string s;
  for (auto x : xs) s += (s.empty() ? "" : " ") + std::to_string(x);
  return s;
}

}  // namespace

const char* version() { return "0.1.0"; }

void write_manifest(const fs::path& out, std::string_view command, const RunConfig& cfg, const KeyValues& inputs) {
  make_dir(out);
  KeyValues kv;
  kv.set("tool", "ppgfp");
  kv.set("version", version());
  kv.set("command", std::string(command));
  kv.set("seed", std::to_string(cfg.seed));
  kv.set("config", kConfigFile);
  for (const auto& [k, v] : inputs.entries) kv.set(k, v);
  write_file_atomic(out / kConfigFile, cfg.to_text());
  write_file_atomic(out / kManifestFile, format_key_values(kv));
}

RunConfig read_run_config(const fs::path& dir) {
  const auto path = dir / kConfigFile;
  if (!fs::exists(path))
    fail(ErrorKind::Usage, path.string() + " is missing; pass the output directory of a train run");
  return load_run_config(path);
}

void synth(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  if (cfg.synth.subjects == 0) fail(ErrorKind::Usage, "synth.subjects must be at least 1");
  make_dir(out);
  synth::write_dataset(out, cfg.synth, cfg.seed);
  write_manifest(out, "synth", cfg, {});
}

data::PreprocessSummary preprocess(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  cfg.validate();
  require_dir(in, "input directory", "run synth first or pass a directory of recordings with --in");
  if (fs::exists(in) && fs::exists(out) && fs::equivalent(in, out))
    fail(ErrorKind::Usage, "preprocess needs distinct --in and --out directories");
  make_dir(out);
  // The manifest is written first so a run that fails on every recording still documents itself.
  KeyValues inputs;
  inputs.set("in", in.string());
  write_manifest(out, "preprocess", cfg, inputs);
  return data::preprocess_tree(in, out, cfg.preprocess);
}

std::vector<std::size_t> train(const RunConfig& cfg, const fs::path& data_dir, std::optional<std::size_t> target,
                               const fs::path& out) {
  cfg.validate();
  const auto ds = load_data(data_dir);
  const auto users = targets(ds, target);
  const auto split = split_of(cfg, ds);
  const auto tc = train_config(cfg);
  KeyValues inputs;
  inputs.set("in", data_dir.string());
  inputs.set("samples", std::to_string(ds.samples.size()));
  inputs.set("users", join(users));
  write_manifest(out, "train", cfg, inputs);
  for (auto user : users) {
    Model model(cfg.model, derive_seed(cfg.seed, user));
    const auto res = train::train_user(model, ds, split, user, tc);
    const auto dir = out / user_dir(user);
    make_dir(dir);
    train::save_checkpoint(dir / kCheckpoint, model, res.final_moments);
    write_file_atomic(dir / "losses.csv", train::losses_csv(res.losses));
    write_file_atomic(dir / "moments.csv", train::moments_csv(res.moments));
  }
  return users;
}

std::string metrics_csv(std::span<const eval::UserEval> rows) {
  std::ostringstream out;
  out << "user,ACC,EER,threshold,moment_cos,impostor_cos,genuine,impostor\n";
  for (const auto& r : rows)
    out << r.user << ',' << format_real(r.acc) << ',' << format_real(r.eer.eer) << ',' << format_real(r.threshold)
        << ',' << format_real(r.moment_cos) << ',' << format_real(r.impostor_cos) << ',' << r.scores.genuine() << ','
        << r.scores.impostor() << '\n';
  return out.str();
}

std::vector<eval::UserEval> evaluate(const RunConfig& cfg, const fs::path& data_dir, const fs::path& model_dir,
                                     std::optional<std::size_t> target, const fs::path& out) {
  cfg.validate();
  require_dir(model_dir, "model directory", "run train first and pass its output with --model");
  auto trained = read_run_config(model_dir);
  trained.eval = cfg.eval;
  const auto ds = load_data(data_dir);
  const auto manifest = parse_key_values(read_file(model_dir / kManifestFile), (model_dir / kManifestFile).string());
  if (const auto* n = manifest.find("samples"); !n || *n != std::to_string(ds.samples.size()))
    fail(ErrorKind::Usage, "the model in " + model_dir.string() + " was trained on a different dataset; pass the same --in as train");
  std::vector<std::size_t> users;
  for (auto u : targets(ds, target))
    if (fs::exists(model_dir / user_dir(u) / kCheckpoint)) users.push_back(u);
  if (target && users.empty())
    fail(ErrorKind::Usage, "no checkpoint for user " + std::to_string(*target) + " in " + model_dir.string() + "; train that user first");
  if (users.empty()) fail(ErrorKind::Usage, "no checkpoints in " + model_dir.string() + "; run train first");
  const auto split = split_of(trained, ds);
  KeyValues inputs;
  inputs.set("in", data_dir.string());
  inputs.set("model", model_dir.string());
  inputs.set("users", join(users));
  write_manifest(out, "evaluate", trained, inputs);
  std::vector<eval::UserEval> rows;
  for (auto user : users) {
    Model model(trained.model, derive_seed(trained.seed, user));
    const auto moments = train::load_checkpoint(model_dir / user_dir(user) / kCheckpoint, model);
    rows.push_back(eval::evaluate_user(model, ds, split, user, moments, trained.eval));
    const auto& r = rows.back();
    write_file_atomic(out / (user_dir(user) + "_roc.csv"), eval::roc_csv(eval::roc(r.scores)));
    std::string scores = "score,label\n";
    for (std::size_t i = 0; i < r.scores.scores.size(); ++i)
      scores += format_real(r.scores.scores[i]) + "," + std::to_string(r.scores.labels[i]) + "\n";
    write_file_atomic(out / (user_dir(user) + "_scores.csv"), scores);
  }
  write_file_atomic(out / "metrics.csv", metrics_csv(rows));
  return rows;
}

eval::AblationReport ablate(const RunConfig& cfg, const fs::path& data_dir, std::optional<std::size_t> target,
                            const fs::path& out) {
  cfg.validate();
  const auto ds = load_data(data_dir);
  const auto users = targets(ds, target);
  KeyValues inputs;
  inputs.set("in", data_dir.string());
  inputs.set("users", join(users));
  write_manifest(out, "ablate", cfg, inputs);
  const Variant variants[] = {Variant::Ppg, Variant::Fingerprint, Variant::Fused};
  auto report = eval::ablation_run(ds, split_of(cfg, ds), users, cfg.model, cfg.seed, train_config(cfg), cfg.eval,
                                   variants);
  write_file_atomic(out / "ablation.csv", report.csv());
  write_file_atomic(out / "ablation_users.csv", report.per_user_csv());
  write_file_atomic(out / "ablation.txt", report.text());
  return report;
}

ad::GradReport gradcheck(const RunConfig& cfg, const std::optional<fs::path>& out) {
  const auto rep = gradcheck_objective(gradcheck_model(), cfg.seed);
  if (out) {
    write_manifest(*out, "gradcheck", cfg, {});
    KeyValues kv;
    kv.set("max_rel_error", format_real(rep.max_rel));
    kv.set("checked", std::to_string(rep.checked));
    kv.set("worst", rep.worst);
    write_file_atomic(*out / "gradcheck.txt", format_key_values(kv));
  }
  return rep;
}

}  // namespace ppgfp::run
