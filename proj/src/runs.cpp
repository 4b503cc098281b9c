#include "thermotwin/runs.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>

namespace twin {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now(const char* fmt) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, fmt, &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), Errc::DiskFull, "cannot write " + path.string());
  out << text;
  out.flush();
  require(static_cast<bool>(out), Errc::DiskFull, "short write to " + path.string());
}

std::FILE* open_append(const fs::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "ab");
  require(f != nullptr, Errc::DiskFull, "cannot write " + path.string());
  return f;
}

void put_line(std::FILE* f, const std::string& line) {
  const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() &&
                  std::fputc('\n', f) != EOF && std::fflush(f) == 0;
  require(ok, Errc::DiskFull, "short write to the run log");
}

}  // namespace

fs::path create_run_dir(const fs::path& runs_dir, std::string& id) {
  std::error_code ec;
  fs::create_directories(runs_dir, ec);
  require(!ec, Errc::DiskFull, "cannot create " + runs_dir.string() + ": " + ec.message());
  if (!id.empty()) {
    const fs::path dir = runs_dir / id;
    require(fs::create_directory(dir, ec) && !ec, ec ? Errc::DiskFull : Errc::BadConfig,
            "run directory " + dir.string() + " already exists or cannot be created");
    return dir;
  }
  static std::atomic<unsigned> counter{0};
  const std::string stamp = utc_now("%Y%m%dT%H%M%SZ");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::string candidate = stamp + "-" + std::to_string(counter.fetch_add(1));
    const fs::path dir = runs_dir / candidate;
    if (fs::create_directory(dir, ec)) {
      id = candidate;
      return dir;
    }
    require(!ec, Errc::DiskFull, "cannot create " + dir.string() + ": " + ec.message());
  }
  throw Error(Errc::Io, "could not allocate a run id under " + runs_dir.string());
}

RunRecorder::RunRecorder(const fs::path& runs_dir, const TwinConfig& cfg, const TwinModel& model,
                         RunOptions opt)
    : id_(opt.id),
      opt_(std::move(opt)),
      width_(model.width),
      height_(model.height),
      dt_(model.detector.dt),
      created_(utc_now("%Y-%m-%dT%H:%M:%SZ")) {
  require(opt_.mode == "live" || opt_.mode == "replay", Errc::BadConfig,
          "run mode must be 'live' or 'replay'");
  try {
    dir_ = create_run_dir(runs_dir, id_);
  } catch (const Error& e) {
    if (e.code() == Errc::BadConfig) throw;
    // Keep the run alive in memory under a synthetic id.
    if (id_.empty()) id_ = "memory-" + utc_now("%Y%m%dT%H%M%SZ");
    fail(e.what());
    return;
  }
  try {
    write_text(dir_ / "config.json", to_json(cfg).dump(2) + "\n");
    save_model(dir_ / "model.twin", model);
    frames_out_ = std::make_unique<Therm1Writer>(dir_ / "frames.therm", width_, height_);
    verdicts_ = open_append(dir_ / "verdicts.jsonl");
    controls_ = open_append(dir_ / "controls.jsonl");
    write_summary();
  } catch (const Error& e) {
    fail(e.what());
  }
}

RunRecorder::~RunRecorder() {
  try {
    finish();
  } catch (...) {
  }
  if (verdicts_) std::fclose(verdicts_);
  if (controls_) std::fclose(controls_);
}

void RunRecorder::fail(const std::string& what) {
  if (!error_) error_ = what;
}

void RunRecorder::record(const Frame& frame, const FrameVerdict& verdict) {
  require(!finished_, Errc::Io, "run already finished");
  line_ = to_json(verdict).dump();
  if (!error_) {
    try {
      frames_out_->append(frame);
      put_line(verdicts_, line_);
      ++frames_on_disk_;
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (error_) {
    if (static_cast<Index>(mem_frames_.size()) >= opt_.memory_limit) {
      mem_frames_.erase(mem_frames_.begin());
      mem_verdicts_.erase(mem_verdicts_.begin());
    }
    mem_frames_.push_back(frame);
    mem_verdicts_.push_back(line_);
  }
  ++frames_;
}

void RunRecorder::record_control(const json& command) {
  if (error_ || !controls_) return;
  try {
    json entry = command;
    entry["frame"] = frames_;
    put_line(controls_, entry.dump());
  } catch (const Error& e) {
    fail(e.what());
  }
}

void RunRecorder::finish() {
  if (finished_) return;
  finished_ = true;
  if (dir_.empty()) return;
  if (frames_out_) {
    try {
      frames_out_->close();
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  try {
    write_summary();
  } catch (const Error& e) {
    fail(e.what());
  }
}

json RunRecorder::summary() const {
  json j = opt_.extra;
  j["id"] = id_;
  j["mode"] = opt_.mode;
  j["created"] = created_;
  j["width"] = width_;
  j["height"] = height_;
  j["dt"] = dt_;
  j["frames"] = frames_;
  j["frames_on_disk"] = frames_on_disk_;
  j["complete"] = finished_ && !error_;
  j["error"] = error_ ? json(*error_) : json(nullptr);
  return j;
}

void RunRecorder::write_summary() { write_text(dir_ / "run.json", summary().dump(2) + "\n"); }

json load_run_summary(const fs::path& run_dir) {
  std::ifstream in(run_dir / "run.json");
  require(static_cast<bool>(in), Errc::Io, "no run.json in " + run_dir.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedHeader, (run_dir / "run.json").string() + ": " + e.what());
  }
}

std::vector<json> list_runs(const fs::path& runs_dir) {
  std::vector<json> out;
  std::error_code ec;
  if (!fs::is_directory(runs_dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(runs_dir, ec)) {
    if (!entry.is_directory()) continue;
    try {
      out.push_back(load_run_summary(entry.path()));
    } catch (const Error&) {
    }
  }
  std::sort(out.begin(), out.end(), [](const json& a, const json& b) {
    return a.value("id", "") < b.value("id", "");
  });
  return out;
}

std::vector<std::string> read_verdict_lines(const fs::path& run_dir) {
  std::ifstream in(run_dir / "verdicts.jsonl");
  require(static_cast<bool>(in), Errc::Io, "no verdicts.jsonl in " + run_dir.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<ThresholdChange> read_threshold_changes(const fs::path& run_dir) {
  std::vector<ThresholdChange> out;
  std::ifstream in(run_dir / "controls.jsonl");
  for (std::string line; in && std::getline(in, line);) {
    const json j = json::parse(line, nullptr, false);
    if (!j.is_object() || j.value("type", "") != "thresholds") continue;
    try {
      out.push_back({j.value("frame", Index{0}), j.at("gamma1").get<double>(),
                     j.at("gamma2").get<double>()});
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedHeader, std::string("bad thresholds control: ") + e.what());
    }
  }
  return out;
}

std::vector<std::string> replay_run(const fs::path& run_dir) {
  const auto model = std::make_shared<const TwinModel>(load_model(run_dir / "model.twin"));
  const TwinConfig cfg = load_config(run_dir / "config.json");
  Therm1Reader frames(run_dir / "frames.therm");
  Runtime rt(model, cfg.prediction);

  // Threshold changes alter verdicts, so they are re-applied where they took effect.
  const auto retunes = read_threshold_changes(run_dir);
  std::size_t next = 0;

  Frame f;
  FrameVerdict v;
  std::vector<std::string> lines;
  lines.reserve(static_cast<std::size_t>(frames.frames()));
  for (Index k = 0; k < frames.frames(); ++k) {
    for (; next < retunes.size() && retunes[next].frame <= k; ++next) {
      rt.detector().set_thresholds(retunes[next].gamma1, retunes[next].gamma2);
    }
    frames.read(k, f);
    rt.process_frame(f, v);
    lines.push_back(to_json(v).dump());
  }
  return lines;
}

}  // namespace twin
