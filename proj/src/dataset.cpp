#include "ppgfp/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "ppgfp/container.hpp"
#include "ppgfp/error.hpp"
#include "ppgfp/keyvalue.hpp"

namespace ppgfp::data {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kFingerprintPixels = image::kFingerprintSize * image::kFingerprintSize;

const std::string& required(const KeyValues& kv, std::string_view key, const fs::path& where) {
  const auto* v = kv.find(key);
  if (!v) fail(ErrorKind::Data, where.string() + ": manifest lacks '" + std::string(key) + "'");
  return *v;
}

std::string indexed(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

KeyValues read_manifest(const fs::path& dir) {
  return parse_key_values(read_file(dir / "manifest.txt"), (dir / "manifest.txt").string());
}

}  // namespace

std::vector<std::size_t> Dataset::users() const {
  std::set<std::size_t> s;
  for (const auto& x : samples) s.insert(x.user);
  return {s.begin(), s.end()};
}

std::vector<std::size_t> Dataset::sessions() const {
  std::set<std::size_t> s;
  for (const auto& x : samples) s.insert(x.session);
  return {s.begin(), s.end()};
}

std::vector<std::size_t> Dataset::ids_of(std::size_t user) const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].user == user) ids.push_back(i);
  return ids;
}

bool Dataset::has_fingerprints() const {
  return !samples.empty() && std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return !s.fingerprint.empty(); });
}

void Dataset::validate() const {
  if (samples.empty()) fail(ErrorKind::Data, "dataset is empty");
  const bool fp = !samples.front().fingerprint.empty();
  for (const auto& s : samples) {
    if (s.beat.size() != signal::kBeatLength) fail(ErrorKind::Data, "dataset: beat length is not 300");
    if (fp != !s.fingerprint.empty()) fail(ErrorKind::Data, "dataset: fingerprints present for only some samples");
    if (fp && s.fingerprint.size() != kFingerprintPixels) fail(ErrorKind::Data, "dataset: fingerprint is not 64x64");
  }
}

void PreprocessConfig::validate() const {
  signal.validate();
  image.validate();
}

RecordingResult preprocess_recording(const signal::FrameStack& stack, std::size_t user, std::size_t session,
                                     const PreprocessConfig& cfg) {
  cfg.validate();
  RecordingResult r;
  r.user = user;
  r.session = session;
  signal::BeatExtraction ex;
  try {
    if (static_cast<double>(stack.frames.size()) < 2.0 * stack.fps)
      fail(ErrorKind::Input, "recording shorter than 2 s");
    ex = signal::extract_beats(signal::frame_mean_intensity(stack), cfg.signal);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Quality && e.kind() != ErrorKind::Input) throw;
    r.error = e.what();
    return r;
  }
  r.found = ex.found.size();
  r.kept = ex.kept.size();
  for (std::size_t i = 0; i < ex.kept.size(); ++i) {
    Sample s;
    s.user = user;
    s.session = session;
    s.beat = ex.beats[i];
    if (cfg.fingerprints) {
      const auto fp = image::beat_synchronized_fingerprint(stack.frames, ex.kept[i].begin, ex.kept[i].end, cfg.image);
      s.fingerprint = image::flatten(fp);
    }
    r.samples.push_back(std::move(s));
  }
  r.ok = true;
  return r;
}

RawRecording read_recording(const fs::path& dir) {
  const auto kv = read_manifest(dir);
  RawRecording rec;
  rec.user = parse_count(required(kv, "subject", dir), "subject");
  rec.session = parse_count(required(kv, "session", dir), "session");
  rec.stack.fps = parse_real(required(kv, "fps", dir), "fps");
  const auto count = parse_count(required(kv, "frame_count", dir), "frame_count");
  const auto w = parse_count(required(kv, "width", dir), "width");
  const auto h = parse_count(required(kv, "height", dir), "height");
  if (!(rec.stack.fps > 0.0)) fail(ErrorKind::Data, dir.string() + ": fps must be positive");
  rec.stack.frames.reserve(count);
  for (std::size_t f = 0; f < count; ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.pgm", f);
    auto img = image::read_pgm(dir / name);
    if (img.width != w || img.height != h) fail(ErrorKind::Data, (dir / name).string() + ": size differs from manifest");
    rec.stack.frames.push_back(std::move(img));
  }
  return rec;
}

std::vector<fs::path> find_recordings(const fs::path& root) {
  if (!fs::is_directory(root)) fail(ErrorKind::Data, root.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.txt")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_recording_result(const fs::path& dir, const RecordingResult& r) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<NamedTensor> beats, fps;
  std::string csv;
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& s = r.samples[i];
    beats.push_back({indexed("beat", i), Tensor({s.beat.size()}, s.beat), DType::F64});
    if (!s.fingerprint.empty())
      fps.push_back({indexed("fp", i), Tensor({image::kFingerprintSize, image::kFingerprintSize}, s.fingerprint), DType::F64});
    for (std::size_t t = 0; t < s.beat.size(); ++t) csv += (t ? "," : "") + format_real(s.beat[t]);
    csv += '\n';
  }
  write_container(dir / "beats.bin", beats);
  if (!fps.empty()) write_container(dir / "fingerprints.bin", fps);
  write_file_atomic(dir / "beats.csv", csv);
  KeyValues m;
  m.set("subject", std::to_string(r.user));
  m.set("session", std::to_string(r.session));
  m.set("status", r.ok ? "ok" : "failed");
  m.set("found", std::to_string(r.found));
  m.set("kept", std::to_string(r.kept));
  m.set("fingerprints", fps.empty() ? "0" : "1");
  std::string err = r.error;
  std::replace(err.begin(), err.end(), '\n', ' ');
  std::replace(err.begin(), err.end(), '#', ' ');
  m.set("error", err);
  write_file_atomic(dir / "manifest.txt", format_key_values(m));
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  for (const auto& dir : find_recordings(root)) {
    if (!fs::exists(dir / "beats.bin")) continue;
    const auto kv = read_manifest(dir);
    if (required(kv, "status", dir) != "ok") continue;
    const auto user = parse_count(required(kv, "subject", dir), "subject");
    const auto session = parse_count(required(kv, "session", dir), "session");
    const auto beats = read_container(dir / "beats.bin");
    std::vector<NamedTensor> fps;
    if (fs::exists(dir / "fingerprints.bin")) {
      fps = read_container(dir / "fingerprints.bin");
      if (fps.size() != beats.size()) fail(ErrorKind::Data, dir.string() + ": beat and fingerprint counts differ");
    }
    for (std::size_t i = 0; i < beats.size(); ++i) {
      Sample s;
      s.user = user;
      s.session = session;
      const auto& b = find_tensor(beats, indexed("beat", i)).tensor;
      s.beat.assign(b.data().begin(), b.data().end());
      if (!fps.empty()) {
        const auto& f = find_tensor(fps, indexed("fp", i)).tensor;
        s.fingerprint.assign(f.data().begin(), f.data().end());
      }
      ds.samples.push_back(std::move(s));
    }
  }
  ds.validate();
  return ds;
}

PreprocessSummary preprocess_tree(const fs::path& in_root, const fs::path& out_root, const PreprocessConfig& cfg) {
  cfg.validate();
  const auto dirs = find_recordings(in_root);
  PreprocessSummary sum;
  std::ostringstream report;
  report << "recording,subject,session,status,found,kept,error\n";
  for (const auto& dir : dirs) {
    if (!fs::exists(dir / "frame_00000.pgm")) continue;  // not a raw recording (e.g. the dataset manifest)
    const auto rel = fs::relative(dir, in_root);
    const auto raw = read_recording(dir);
    const auto r = preprocess_recording(raw.stack, raw.user, raw.session, cfg);
    write_recording_result(out_root / rel, r);
    ++sum.recordings;
    if (!r.ok) ++sum.failed;
    sum.samples += r.samples.size();
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    report << rel.generic_string() << ',' << r.user << ',' << r.session << ',' << (r.ok ? "ok" : "failed") << ','
           << r.found << ',' << r.kept << ',' << err << '\n';
  }
  std::error_code ec;
  fs::create_directories(out_root, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + out_root.string() + ": " + ec.message());
  write_file_atomic(out_root / "report.csv", report.str());
  if (sum.recordings == 0) fail(ErrorKind::Data, "no recordings found under " + in_root.string());
  if (sum.failed == sum.recordings) fail(ErrorKind::Data, "every recording failed preprocessing; see report.csv");
  return sum;
}

}  // namespace ppgfp::data
