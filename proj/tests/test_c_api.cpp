#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "ppgfp/ppgfp.h"
#include "support/fs.hpp"

namespace fs = std::filesystem;

namespace {

// Owns a config handle for the duration of a test.
struct Cfg {
  ppgfp_config* p = nullptr;
  Cfg() { REQUIRE(ppgfp_config_new(&p) == PPGFP_OK); }
  ~Cfg() { ppgfp_config_free(p); }
  void set(const char* k, const char* v) { REQUIRE_MESSAGE(ppgfp_config_set(p, k, v) == PPGFP_OK, ppgfp_last_error()); }
};

std::string get(const Cfg& c, const char* key) {
  std::size_t need = 0;
  REQUIRE(ppgfp_config_get(c.p, key, nullptr, 0, &need) == PPGFP_OK);
  std::string buf(need, '\0');
  REQUIRE(ppgfp_config_get(c.p, key, buf.data(), buf.size(), &need) == PPGFP_OK);
  buf.resize(need - 1);
  return buf;
}

// Small enough to train in seconds: 2 subjects, 10 s recordings, width-8 encoders.
void make_tiny(Cfg& c) {
  c.set("seed", "3");
  c.set("synth.subjects", "2");
  c.set("synth.recordings", "2");
  c.set("synth.duration_s", "10");
  c.set("synth.size", "64");
  c.set("model.width", "8");
  c.set("model.state_dim", "4");
  c.set("model.blocks", "1");
  c.set("model.heads", "2");
  c.set("model.u_chunk", "30");
  c.set("model.v_chunk", "256");
  c.set("epochs", "2");
  c.set("batch", "16");
}

}  // namespace

TEST_CASE("status codes map onto exit codes") {
  CHECK(ppgfp_exit_code(PPGFP_OK) == 0);
  CHECK(ppgfp_exit_code(PPGFP_ERR_USAGE) == 1);
  CHECK(ppgfp_exit_code(PPGFP_ERR_CONFIG) == 1);
  CHECK(ppgfp_exit_code(PPGFP_ERR_DATA) == 2);
  CHECK(ppgfp_exit_code(PPGFP_ERR_QUALITY) == 2);
  CHECK(ppgfp_exit_code(PPGFP_ERR_IO) == 2);
  CHECK(ppgfp_exit_code(PPGFP_ERR_NUMERIC) == 3);
  CHECK(std::string(ppgfp_status_name(PPGFP_ERR_METRIC)) == "metric error");
  CHECK(std::string(ppgfp_version()).size() > 0);
}

TEST_CASE("config handles set, get and reject") {
  Cfg c;
  CHECK(get(c, "preset") == "desk");
  c.set("lr", "0.003");
  CHECK(get(c, "lr") == "0.003");
  CHECK(ppgfp_config_set(c.p, "lr", "fast") == PPGFP_ERR_CONFIG);
  CHECK(std::string(ppgfp_last_error()).find("lr") != std::string::npos);
  CHECK(get(c, "lr") == "0.003");  // a rejected value leaves the config untouched
  CHECK(ppgfp_config_set(c.p, "nope", "1") == PPGFP_ERR_CONFIG);
  CHECK(ppgfp_config_set(c.p, nullptr, "1") == PPGFP_ERR_INPUT);
  char small[2];
  std::size_t need = 0;
  CHECK(ppgfp_config_get(c.p, "preset", small, sizeof small, &need) == PPGFP_OK);
  CHECK(need == 5);
  CHECK(small[0] == '\0');
  ppgfp_config* loaded = nullptr;
  CHECK(ppgfp_config_load("/nonexistent/run.cfg", &loaded) == PPGFP_ERR_IO);
  CHECK(loaded == nullptr);
}

TEST_CASE("missing inputs are usage errors") {
  Cfg c;
  testing::TempDir tmp;
  CHECK(ppgfp_train(c.p, (tmp.path / "none").c_str(), -1, (tmp.path / "out").c_str()) == PPGFP_ERR_USAGE);
  CHECK(std::string(ppgfp_last_error()).find("preprocess") != std::string::npos);
  CHECK(ppgfp_preprocess(c.p, (tmp.path / "none").c_str(), (tmp.path / "out").c_str(), nullptr) == PPGFP_ERR_USAGE);
  ppgfp_model* m = nullptr;
  CHECK(ppgfp_model_load((tmp.path / "none").c_str(), 0, &m) == PPGFP_ERR_USAGE);
  CHECK(m == nullptr);
}

TEST_CASE("gradcheck through the C API") {
  Cfg c;
  double err = 1.0;
  std::size_t checked = 0;
  REQUIRE(ppgfp_gradcheck(c.p, nullptr, &err, &checked) == PPGFP_OK);
  CHECK(err < 1e-4);
  CHECK(checked > 500);
}

TEST_CASE("synth, preprocess, train, evaluate and score end to end") {
  Cfg c;
  make_tiny(c);
  testing::TempDir tmp;
  const auto raw = tmp.path / "raw", pre = tmp.path / "pre", model = tmp.path / "model", metrics = tmp.path / "metrics";
  REQUIRE_MESSAGE(ppgfp_synth(c.p, raw.c_str()) == PPGFP_OK, ppgfp_last_error());
  ppgfp_preprocess_summary s{};
  REQUIRE_MESSAGE(ppgfp_preprocess(c.p, raw.c_str(), pre.c_str(), &s) == PPGFP_OK, ppgfp_last_error());
  CHECK(s.recordings == 4);
  CHECK(s.failed == 0);
  CHECK(s.samples > 20);
  REQUIRE_MESSAGE(ppgfp_train(c.p, pre.c_str(), 1, model.c_str()) == PPGFP_OK, ppgfp_last_error());
  for (const char* f : {"run_manifest.txt", "run_config.txt", "user_01/checkpoint.bin", "user_01/losses.csv",
                        "user_01/moments.csv"})
    CHECK_MESSAGE(fs::exists(model / f), f);
  CHECK_FALSE(fs::exists(model / "user_00"));

  std::vector<ppgfp_user_metrics> rows(4);
  std::size_t n = 0;
  REQUIRE_MESSAGE(ppgfp_evaluate(c.p, pre.c_str(), model.c_str(), -1, metrics.c_str(), rows.data(), rows.size(), &n) ==
                      PPGFP_OK,
                  ppgfp_last_error());
  REQUIRE(n == 1);
  CHECK(rows[0].user == 1);
  CHECK(rows[0].genuine > 0);
  CHECK(rows[0].impostor > 0);
  CHECK(rows[0].eer >= 0.0);
  CHECK(std::isfinite(rows[0].moment_cos));
  CHECK(fs::exists(metrics / "metrics.csv"));
  CHECK(fs::exists(metrics / "user_01_roc.csv"));
  CHECK(ppgfp_evaluate(c.p, pre.c_str(), model.c_str(), 0, metrics.c_str(), nullptr, 0, &n) == PPGFP_ERR_USAGE);

  ppgfp_model* m = nullptr;
  REQUIRE_MESSAGE(ppgfp_model_load(model.c_str(), 1, &m) == PPGFP_OK, ppgfp_last_error());
  std::vector<double> beat(ppgfp_model_beat_length(m), 0.5), fp(ppgfp_model_fingerprint_length(m), 0.5);
  CHECK(beat.size() == 300);
  CHECK(fp.size() == 4096);
  double score = -1.0;
  CHECK(ppgfp_model_score(m, beat.data(), beat.size(), fp.data(), fp.size(), &score) == PPGFP_OK);
  CHECK(score > 0.0);
  CHECK(score < 1.0);
  CHECK(ppgfp_model_score(m, beat.data(), 10, fp.data(), fp.size(), &score) != PPGFP_OK);
  CHECK(ppgfp_model_score(m, nullptr, 0, fp.data(), fp.size(), &score) == PPGFP_ERR_INPUT);
  ppgfp_model_free(m);
}
