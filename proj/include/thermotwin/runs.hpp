#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "thermotwin/config.hpp"
#include "thermotwin/datamodel.hpp"
#include "thermotwin/pipeline.hpp"

namespace twin {

/// Layout of runs/<id>/:
///   run.json        summary (id, mode, size, frame count, completion, errors)
///   config.json     configuration snapshot
///   model.twin      model the verdicts were produced with
///   frames.therm    THERM1 frames (frames.therm.part while recording)
///   verdicts.jsonl  one verdict per line, in frame order
///   controls.jsonl  operator commands with the frame they took effect on;
///                   {"type":"thresholds","gamma1":..,"gamma2":..} entries
///                   are replayed
struct RunOptions {
  std::string mode = "live";  // live | replay
  std::string id;             // empty: generated
  nlohmann::json extra = nlohmann::json::object();  // merged into run.json
  /// Frames kept in memory once the disk refuses writes.
  Index memory_limit = 1024;
};

/// Persists one run as it happens. A failed write does not stop the run: the
/// error is recorded and later frames and verdicts are kept in memory.
class RunRecorder {
 public:
  RunRecorder(const std::filesystem::path& runs_dir, const TwinConfig& cfg,
              const TwinModel& model, RunOptions opt = {});
  ~RunRecorder();
  RunRecorder(const RunRecorder&) = delete;
  RunRecorder& operator=(const RunRecorder&) = delete;

  void record(const Frame& frame, const FrameVerdict& verdict);
  void record_control(const nlohmann::json& command);
  /// Assembles frames.therm and marks the run complete. Idempotent.
  void finish();

  const std::string& id() const noexcept { return id_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }
  Index frames() const noexcept { return frames_; }
  bool persisting() const noexcept { return !error_; }
  const std::optional<std::string>& error() const noexcept { return error_; }
  const std::vector<Frame>& memory_frames() const noexcept { return mem_frames_; }
  const std::vector<std::string>& memory_verdicts() const noexcept { return mem_verdicts_; }
  nlohmann::json summary() const;

 private:
  void fail(const std::string& what);
  void write_summary();

  std::filesystem::path dir_;
  std::string id_;
  RunOptions opt_;
  std::uint32_t width_;
  std::uint32_t height_;
  double dt_;
  std::string created_;
  std::unique_ptr<Therm1Writer> frames_out_;
  std::FILE* verdicts_ = nullptr;
  std::FILE* controls_ = nullptr;
  Index frames_ = 0;
  Index frames_on_disk_ = 0;
  bool finished_ = false;
  std::optional<std::string> error_;
  std::vector<Frame> mem_frames_;
  std::vector<std::string> mem_verdicts_;
  std::string line_;
};

/// Creates runs_dir/<id> exclusively; a generated id is unique across
/// concurrent recorders.
std::filesystem::path create_run_dir(const std::filesystem::path& runs_dir, std::string& id);

/// run.json of every run directory, sorted by id. Unreadable entries are skipped.
std::vector<nlohmann::json> list_runs(const std::filesystem::path& runs_dir);
nlohmann::json load_run_summary(const std::filesystem::path& run_dir);
std::vector<std::string> read_verdict_lines(const std::filesystem::path& run_dir);

/// A detector retune recorded in controls.jsonl, effective from `frame` on.
struct ThresholdChange {
  Index frame = 0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};

/// Threshold changes of a run in recorded order; empty when there are none.
std::vector<ThresholdChange> read_threshold_changes(const std::filesystem::path& run_dir);

/// Feeds the persisted frames through a fresh runtime built from the persisted
/// model and config, re-applying recorded threshold changes, and returns the
/// verdict lines it produces.
std::vector<std::string> replay_run(const std::filesystem::path& run_dir);

}  // namespace twin
