#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "thermotwin/anomaly.hpp"
#include "thermotwin/config.hpp"
#include "thermotwin/datamodel.hpp"
#include "thermotwin/decomposition.hpp"
#include "thermotwin/prediction.hpp"
#include "thermotwin/sampling.hpp"
#include "thermotwin/svr.hpp"

namespace twin {

/// Everything the live loop needs, built offline from training runs.
struct TwinModel {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  PodBasis basis;
  MeasurementPlan plan;
  ImputerSet imputers;
  DetectorConfig detector;
  std::vector<PredictionProfile> profiles;
  nlohmann::json info = nlohmann::json::object();  // training summary

  Index pixels() const noexcept { return Index{width} * Index{height}; }
  const PredictionProfile& profile(const std::string& name) const;
  /// Throws DimensionMismatch when the parts disagree.
  void validate() const;
};

void save_model(const std::filesystem::path& path, const TwinModel& model);
TwinModel load_model(const std::filesystem::path& path);

/// Optional windowed RPCA clean, then POD over all snapshots, sensor
/// selection and one imputer per sensor. Throws NoData on an empty list.
TwinModel train(const std::vector<Dataset>& datasets, const TwinConfig& cfg);

struct RpcaSplit {
  PixelMatrix L;
  PixelMatrix S;
  Index windows = 0;
  Index converged = 0;  // windows that met the tolerance
  int max_iterations = 0;
};

/// RPCA over consecutive windows of `cfg.window` columns. The last window is
/// shifted back so every window is full width; overlapping columns take the
/// later window's result.
RpcaSplit rpca_windows(const PixelMatrix& X, const RpcaConfig& cfg);

/// Replaces each dataset's snapshots by the low-rank part of windowed RPCA.
void rpca_clean(std::vector<Dataset>& datasets, const RpcaConfig& cfg);

struct FrameVerdict {
  Index frame = 0;  // position in the stream
  double t = 0.0;
  Eigen::VectorXd y_raw;
  Eigen::VectorXd y_clean;
  std::vector<Index> imputed;  // positions within the sample vector
  bool sensor_fault = false;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd x_hat;
  AnomalyReport report;
  double latency_ms = 0.0;
};

/// Stable serialisation used for the verdict log. Wall latency, the error
/// image and the reconstruction are left out so replays compare byte-for-byte.
nlohmann::json to_json(const FrameVerdict& v);

/// Copy of the forecast inputs, taken so predictions can run off the hot path.
struct HistorySnapshot {
  CoefficientHistory coefficients;
  AnomalyHistory anomaly;
  double dt = 0.0;
};

/// Runtime state of one stream: detector, coefficient and anomaly history.
class Runtime {
 public:
  Runtime(std::shared_ptr<const TwinModel> model, const PredictionConfig& pcfg = {});

  /// Sample, guard and impute, reconstruct, detect, append history. `out`
  /// keeps its buffers so steady-state calls do not touch the heap. A
  /// SensorFault is reported in the verdict and the previous coefficients are
  /// carried forward.
  void process_frame(const Frame& frame, FrameVerdict& out);
  FrameVerdict process_frame(const Frame& frame);

  HistorySnapshot snapshot() const;
  PredictionBundle request_prediction(const PredictionProfile& profile) const;
  /// Looks the name up in the runtime's prediction config.
  PredictionBundle request_prediction(const std::string& profile_name) const;
  const PredictionConfig& prediction_config() const noexcept { return pcfg_; }

  const TwinModel& model() const noexcept { return *model_; }
  std::shared_ptr<const TwinModel> model_ptr() const noexcept { return model_; }
  Detector& detector() noexcept { return detector_; }
  const Detector& detector() const noexcept { return detector_; }
  const CoefficientHistory& coefficients() const noexcept { return coefs_; }
  const AnomalyHistory& anomaly_history() const noexcept { return anomaly_; }
  Index frames() const noexcept { return frames_; }
  void reset();

 private:
  std::shared_ptr<const TwinModel> model_;
  PredictionConfig pcfg_;
  Detector detector_;
  CoefficientHistory coefs_;
  AnomalyHistory anomaly_;
  Eigen::VectorXd last_a_;
  ImputeScratch impute_scratch_;
  Index frames_ = 0;
};

/// State forecast plus anomaly forecast where enough stable history exists,
/// merged pixel by pixel.
PredictionBundle predict(const TwinModel& model, const HistorySnapshot& history,
                         const PredictionProfile& profile);

/// Runs frames [0, origin] through a fresh runtime, forecasts each horizon
/// from `origin` with window w and scores it against truth[origin + l].
/// `truth` defaults to the stream itself.
std::vector<HorizonError> evaluate_forecast(std::shared_ptr<const TwinModel> model,
                                            const std::vector<Frame>& stream, Index origin,
                                            Index w, const std::vector<Index>& horizons,
                                            const std::vector<Frame>* truth = nullptr);

/// Horizons 20, 40, ... up to l (steps), or just l when l < 20.
std::vector<Index> default_horizons(Index l);

}  // namespace twin
