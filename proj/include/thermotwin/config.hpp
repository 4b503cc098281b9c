#pragma once

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thermotwin/anomaly.hpp"
#include "thermotwin/prediction.hpp"
#include "thermotwin/rpca.hpp"
#include "thermotwin/simulator.hpp"
#include "thermotwin/svr.hpp"

namespace twin {

struct PodConfig {
  Index rank = 3;
  Index sensors = 3;
  bool center = false;

  void validate() const;
};

/// Offline cleaning. `profile` is "auto" (data-driven lambda and mu) or
/// "camera" (0.001 and 1e-5, tuned for camera-size windows); explicit
/// lambda/mu override either.
struct RpcaConfig {
  std::string profile = "auto";
  std::optional<double> lambda;
  std::optional<double> mu;
  double tol = 1e-7;
  int max_iter = 500;
  Index window = 50;
  bool preclean = false;  // run before POD during training

  RpcaParams params() const;
  void validate() const;
};

struct PredictionConfig {
  std::vector<PredictionProfile> profiles = default_profiles();
  std::string default_profile = "w100_l100";
  /// Refit after every frame on a worker and publish the result, instead of
  /// only on request.
  bool sliding_refit = false;
  Index anomaly_max_pixels = 4096;

  const PredictionProfile& profile(const std::string& name) const;
  /// Ring capacities large enough for every profile.
  Index state_capacity() const;
  Index anomaly_capacity() const;
  void validate() const;
};

struct ServiceConfig {
  std::string addr = "127.0.0.1:8080";
  std::filesystem::path runs_dir = "runs";
  std::filesystem::path model = "model.twin";
  /// Wall seconds per simulated frame; 0 runs as fast as the pipeline allows.
  double frame_period = 3.5;
  double speed = 1.0;  // divides frame_period, also used for replay pacing
  Index client_buffer = 256;
  std::uint32_t heatmap_max_width = 130;
  std::uint32_t heatmap_max_height = 150;
  Index max_frames = 0;  // 0: run until stopped

  /// Splits addr into host and port; BadConfig when malformed.
  std::pair<std::string, int> host_port() const;
  void validate() const;
};

struct TwinConfig {
  SimulatorConfig simulator;
  DetectorConfig detector;
  PredictionConfig prediction;
  RpcaConfig rpca;
  ServiceConfig service;
  ImputerConfig svr;
  PodConfig pod;

  void validate() const;
};

nlohmann::json to_json(const DetectorConfig& c);
DetectorConfig detector_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PredictionProfile& p);
PredictionProfile profile_from_json(const nlohmann::json& j);

/// Missing keys keep their defaults; unknown keys are rejected as BadConfig so
/// typos do not pass silently.
TwinConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TwinConfig& cfg);

TwinConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TwinConfig& cfg);

/// Defaults, then TWIN_CONFIG if set, then TWIN_ADDR if set.
TwinConfig config_from_environment();

}  // namespace twin
