#include "thermotwin/pipeline.hpp"

#include <chrono>

#include "thermotwin/archive.hpp"
#include "thermotwin/rpca.hpp"

namespace twin {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr const char* kModelFormat = "thermotwin-model";
constexpr int kModelVersion = 1;

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

// -- model ---------------------------------------------------------------------

const PredictionProfile& TwinModel::profile(const std::string& name) const {
  for (const PredictionProfile& p : profiles) {
    if (p.name == name) return p;
  }
  throw Error(Errc::BadConfig, "model has no prediction profile '" + name + "'");
}

void TwinModel::validate() const {
  require(width >= 1 && height >= 1, Errc::DimensionMismatch, "model grid is empty");
  require(basis.pixels() == pixels(), Errc::DimensionMismatch,
          "basis rows do not match the model grid");
  require(plan.r() == basis.rank(), Errc::DimensionMismatch, "plan rank does not match the basis");
  for (Index i : plan.indices) {
    require(i >= 0 && i < pixels(), Errc::DimensionMismatch, "sensor pixel outside the grid");
  }
  require(imputers.size() == plan.s(), Errc::DimensionMismatch,
          "need one imputer per sensor pixel");
  detector.validate();
  require(detector.m <= pixels(), Errc::MTooLarge, "detector m exceeds the pixel count");
  for (const PredictionProfile& p : profiles) p.validate();
}

void save_model(const std::filesystem::path& path, const TwinModel& model) {
  model.validate();
  ArchiveWriter ar;
  nlohmann::json& meta = ar.meta();
  meta["format"] = kModelFormat;
  meta["version"] = kModelVersion;
  meta["width"] = model.width;
  meta["height"] = model.height;
  meta["total_energy"] = model.basis.total_energy;
  meta["full_rank"] = model.basis.full_rank;
  meta["detector"] = to_json(model.detector);
  meta["profiles"] = nlohmann::json::array();
  for (const PredictionProfile& p : model.profiles) meta["profiles"].push_back(to_json(p));
  meta["info"] = model.info;
  ar.put("pod.modes", model.basis.modes);
  ar.put("pod.singular_values", MatrixXd(model.basis.singular_values));
  if (model.basis.centered()) ar.put("pod.mean", MatrixXd(model.basis.mean));
  save_plan(ar, model.plan, "plan.");
  save_imputers(ar, model.imputers, "svr.");
  ar.write(path);
}

TwinModel load_model(const std::filesystem::path& path) {
  const ArchiveReader ar(path);
  const nlohmann::json& meta = ar.meta();
  require(meta.value("format", "") == kModelFormat, Errc::MalformedHeader,
          path.string() + " is not a model archive");
  require(meta.value("version", 0) == kModelVersion, Errc::MalformedHeader,
          "unsupported model archive version");
  TwinModel m;
  try {
    m.width = meta.at("width").get<std::uint32_t>();
    m.height = meta.at("height").get<std::uint32_t>();
    m.basis.total_energy = meta.at("total_energy").get<double>();
    m.basis.full_rank = meta.at("full_rank").get<Index>();
    m.detector = detector_config_from_json(meta.at("detector"));
    for (const auto& p : meta.at("profiles")) m.profiles.push_back(profile_from_json(p));
    m.info = meta.value("info", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedHeader, path.string() + ": " + e.what());
  }
  m.basis.modes = ar.matrix("pod.modes");
  m.basis.singular_values = ar.vector("pod.singular_values");
  if (ar.has("pod.mean")) m.basis.mean = ar.vector("pod.mean");
  m.plan = load_plan(ar, m.basis, "plan.");
  m.imputers = load_imputers(ar, "svr.");
  m.validate();
  return m;
}

// -- training ------------------------------------------------------------------

RpcaSplit rpca_windows(const PixelMatrix& X, const RpcaConfig& cfg) {
  cfg.validate();
  const RpcaParams params = cfg.params();
  const Index k = X.cols();
  require(k >= 2, Errc::TooFewFrames, "RPCA needs at least two frames");
  RpcaSplit out;
  out.L.resize(X.rows(), k);
  out.S.resize(X.rows(), k);
  const Index w = std::min(cfg.window, k);
  for (Index start = 0; start < k; start += w) {
    const Index from = std::min(start, k - w);
    const RpcaResult res = rpca(X.middleCols(from, w), params);
    out.L.middleCols(from, w) = res.L.cast<float>();
    out.S.middleCols(from, w) = res.S.cast<float>();
    ++out.windows;
    out.converged += res.converged ? 1 : 0;
    out.max_iterations = std::max(out.max_iterations, res.iterations);
  }
  return out;
}

void rpca_clean(std::vector<Dataset>& datasets, const RpcaConfig& cfg) {
  cfg.validate();
  for (Dataset& ds : datasets) {
    if (ds.snapshots.snapshots() < 2) continue;
    ds.snapshots.data = rpca_windows(ds.snapshots.data, cfg).L;
  }
}

TwinModel train(const std::vector<Dataset>& datasets, const TwinConfig& cfg) {
  if (datasets.empty()) throw Error(Errc::NoData, "no training datasets");
  cfg.pod.validate();
  cfg.detector.validate();

  std::vector<Dataset> cleaned;
  const std::vector<Dataset>* data = &datasets;
  if (cfg.rpca.preclean) {
    cleaned = datasets;
    rpca_clean(cleaned, cfg.rpca);
    data = &cleaned;
  }

  TwinModel model;
  model.width = data->front().snapshots.width;
  model.height = data->front().snapshots.height;
  ColumnBlocks<float> X;
  for (const Dataset& ds : *data) {
    require(ds.snapshots.width == model.width && ds.snapshots.height == model.height,
            Errc::DimensionMismatch, "training datasets differ in frame size");
    if (ds.snapshots.snapshots() > 0) X.add(ds.snapshots.data);
  }
  if (X.cols() == 0) throw Error(Errc::NoData, "training datasets hold no frames");
  require(X.rows() == model.pixels(), Errc::DimensionMismatch,
          "snapshot rows do not match width*height");

  SvdOptions opts;
  opts.center = cfg.pod.center;
  model.basis = truncated_svd(X, cfg.pod.rank, opts);
  model.plan = select_locations(model.basis, cfg.pod.sensors);

  MatrixXd samples(model.plan.s(), X.cols());
  Index col = 0;
  for (const auto& block : X.blocks()) {
    for (Index p = 0; p < model.plan.s(); ++p) {
      const Index pixel = model.plan.indices[static_cast<std::size_t>(p)];
      samples.row(p).segment(col, block.cols()) = block.row(pixel).cast<double>();
    }
    col += block.cols();
  }
  model.imputers = build_imputers(samples, cfg.svr);
  model.detector = cfg.detector;
  model.profiles = cfg.prediction.profiles;

  nlohmann::json labels = nlohmann::json::array();
  for (const Dataset& ds : *data) labels.push_back(ds.meta.label);
  model.info = {{"datasets", data->size()},
                {"labels", labels},
                {"snapshots", X.cols()},
                {"rank", model.basis.rank()},
                {"energy_ratio", pod_energy_ratio(model.basis, model.basis.rank())},
                {"singular_values", to_std(model.basis.singular_values)},
                {"sensor_pixels", model.plan.indices},
                {"rpca_preclean", cfg.rpca.preclean},
                {"centered", cfg.pod.center}};
  model.validate();
  return model;
}

// -- runtime -------------------------------------------------------------------

nlohmann::json to_json(const FrameVerdict& v) {
  return {{"frame", v.frame},
          {"t", v.t},
          {"y_raw", to_std(v.y_raw)},
          {"y_clean", to_std(v.y_clean)},
          {"imputed", v.imputed},
          {"sensor_fault", v.sensor_fault},
          {"coefficients", to_std(v.coefficients)},
          {"report", to_json(v.report)}};
}

Runtime::Runtime(std::shared_ptr<const TwinModel> model, const PredictionConfig& pcfg)
    : model_(std::move(model)),
      pcfg_(pcfg),
      detector_(model_ ? model_->detector : DetectorConfig{}),
      coefs_(model_ ? model_->basis.rank() : 1, pcfg.state_capacity()),
      anomaly_(pcfg.anomaly_max_pixels, pcfg.anomaly_capacity()) {
  require(model_ != nullptr, Errc::BadConfig, "runtime needs a model");
  pcfg_.validate();
  model_->validate();
  last_a_ = VectorXd::Zero(model_->basis.rank());
}

void Runtime::reset() {
  detector_.reset();
  coefs_.clear();
  anomaly_.clear();
  last_a_.setZero();
  frames_ = 0;
}

void Runtime::process_frame(const Frame& frame, FrameVerdict& out) {
  const auto start = std::chrono::steady_clock::now();
  const TwinModel& m = *model_;
  if (frame.width != m.width || frame.height != m.height || frame.size() != m.pixels()) {
    throw Error(Errc::DimensionMismatch, "frame does not match the model grid");
  }
  if (!frame.values.allFinite()) {
    Index bad = 0;
    while (std::isfinite(frame.values(bad))) ++bad;
    throw Error(Errc::NonFinitePixel, "non-finite pixel in frame", bad);
  }

  out.frame = frames_;
  out.t = frame.t;
  out.y_raw.resize(m.plan.s());
  gather(m.plan, frame.values, out.y_raw);
  out.y_clean = out.y_raw;
  out.coefficients.resize(m.basis.rank());
  out.sensor_fault = false;
  try {
    impute_if_erroneous(out.y_clean, m.imputers, out.imputed, impute_scratch_);
    estimate_coefficients_into(m.plan, m.basis, out.y_clean, out.coefficients);
    last_a_ = out.coefficients;
  } catch (const Error& e) {
    if (e.code() != Errc::SensorFault) throw;
    out.sensor_fault = true;
    out.y_clean = out.y_raw;
    out.coefficients = last_a_;
  }
  out.x_hat.resize(m.pixels());
  expand_into(m.basis, out.coefficients, out.x_hat);
  detector_.detect(frame.values, out.x_hat, frame.t, out.report);
  coefs_.push(out.coefficients, frame.t);
  anomaly_.update(out.report.anomaly_set, frame.values);
  ++frames_;
  out.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

FrameVerdict Runtime::process_frame(const Frame& frame) {
  FrameVerdict v;
  process_frame(frame, v);
  return v;
}

HistorySnapshot Runtime::snapshot() const { return {coefs_, anomaly_, detector_.config().dt}; }

PredictionBundle Runtime::request_prediction(const PredictionProfile& profile) const {
  return predict(*model_, snapshot(), profile);
}

PredictionBundle Runtime::request_prediction(const std::string& profile_name) const {
  return request_prediction(pcfg_.profile(profile_name));
}

PredictionBundle predict(const TwinModel& model, const HistorySnapshot& history,
                         const PredictionProfile& profile) {
  profile.validate();
  PredictionBundle b;
  b.profile = profile.name;
  b.horizon_steps = profile.l;
  b.horizon_s = static_cast<double>(profile.l) * history.dt;

  DmdModel fitted;
  b.x_osl_pred = predict_state(history.coefficients, model.basis, profile.w, profile.l,
                               profile.state_rank, &fitted);
  b.issued_at = history.coefficients.latest_time();
  b.warnings = fitted.warnings;

  const std::vector<Index>& set = history.anomaly.pixel_ids();
  if (!set.empty() && history.anomaly.tracking() &&
      history.anomaly.size() >= profile.anomaly_frames()) {
    b.x_anomaly_pred =
        predict_anomaly(history.anomaly, profile.anomaly_w, profile.l, profile.anomaly_rank);
    b.anomaly_pixels = set;
    b.anomaly_used = true;
    b.x_merged = merge_predictions(b.x_osl_pred, b.x_anomaly_pred, b.anomaly_pixels);
  } else {
    if (!set.empty()) {
      b.warnings.push_back(std::to_string(set.size()) +
                           " anomaly pixels lack stable history; state forecast used for them");
    }
    b.x_merged = b.x_osl_pred;
  }
  return b;
}

std::vector<Index> default_horizons(Index l) {
  require(l >= 1, Errc::BadConfig, "horizon must be >= 1");
  if (l < 20) return {l};
  std::vector<Index> out;
  for (Index h = 20; h <= l; h += 20) out.push_back(h);
  if (out.back() != l) out.push_back(l);
  return out;
}

std::vector<HorizonError> evaluate_forecast(std::shared_ptr<const TwinModel> model,
                                            const std::vector<Frame>& stream, Index origin,
                                            Index w, const std::vector<Index>& horizons,
                                            const std::vector<Frame>* truth) {
  require(model != nullptr, Errc::BadConfig, "evaluation needs a model");
  require(!horizons.empty(), Errc::BadConfig, "no horizons to evaluate");
  const std::vector<Frame>& ref = truth ? *truth : stream;
  require(ref.size() == stream.size(), Errc::DimensionMismatch,
          "truth and stream differ in length");
  require(origin >= 0 && origin < static_cast<Index>(stream.size()), Errc::IndexOutOfRange,
          "forecast origin outside the stream");

  PredictionConfig pcfg;
  pcfg.profiles.clear();
  for (Index l : horizons) {
    PredictionProfile p;
    p.name = "eval_l" + std::to_string(l);
    p.w = w;
    p.l = l;
    pcfg.profiles.push_back(p);
    if (origin + l >= static_cast<Index>(ref.size())) {
      throw Error(Errc::IndexOutOfRange,
                  "horizon " + std::to_string(l) + " runs past the end of the stream",
                  origin + l);
    }
  }
  pcfg.default_profile = pcfg.profiles.front().name;

  Runtime rt(model, pcfg);
  FrameVerdict v;
  for (Index k = 0; k <= origin; ++k) rt.process_frame(stream[static_cast<std::size_t>(k)], v);
  const HistorySnapshot snap = rt.snapshot();

  std::vector<HorizonError> rows;
  for (const PredictionProfile& p : pcfg.profiles) {
    const PredictionBundle b = predict(*model, snap, p);
    const Frame& target = ref[static_cast<std::size_t>(origin + p.l)];
    rows.push_back(evaluate_rmse(b.horizon_s, b.x_merged, target.values.cast<double>()));
  }
  return rows;
}

}  // namespace twin
