#include "thermotwin/prediction.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace twin {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void PredictionProfile::validate() const {
  require(w >= 1 && l >= 1 && anomaly_w >= 1, Errc::BadConfig,
          "profile '" + name + "' needs w, l, anomaly_w >= 1");
  require(state_rank >= 0 && anomaly_rank >= 1, Errc::BadConfig,
          "profile '" + name + "' has an invalid DMD rank");
}

std::vector<PredictionProfile> default_profiles() {
  std::vector<PredictionProfile> out;
  for (Index l : {100, 300}) {
    for (Index w : {100, 200, 300}) {
      PredictionProfile p;
      p.name = "w" + std::to_string(w) + "_l" + std::to_string(l);
      p.w = w;
      p.l = l;
      out.push_back(p);
    }
  }
  return out;
}

// -- CoefficientHistory --------------------------------------------------------

CoefficientHistory::CoefficientHistory(Index r, Index capacity)
    : data_(MatrixXd::Zero(r, capacity)), times_(static_cast<std::size_t>(capacity), 0.0) {
  require(r >= 1 && capacity >= 1, Errc::BadConfig, "history needs r >= 1 and capacity >= 1");
}

void CoefficientHistory::push(const Eigen::Ref<const VectorXd>& a, double t) {
  require(a.size() == rank(), Errc::DimensionMismatch, "coefficient vector has wrong length");
  data_.col(head_) = a;
  times_[static_cast<std::size_t>(head_)] = t;
  head_ = (head_ + 1) % capacity();
  if (count_ < capacity()) ++count_;
}

MatrixXd CoefficientHistory::recent(Index count) const {
  require(count >= 0 && count <= count_, Errc::InsufficientHistory,
          "asked for " + std::to_string(count) + " of " + std::to_string(count_) + " columns");
  MatrixXd out(rank(), count);
  const Index cap = capacity();
  const Index start = (head_ - count + cap) % cap;
  for (Index j = 0; j < count; ++j) out.col(j) = data_.col((start + j) % cap);
  return out;
}

std::vector<double> CoefficientHistory::recent_times(Index count) const {
  require(count >= 0 && count <= count_, Errc::InsufficientHistory, "not enough history");
  std::vector<double> out;
  const Index cap = capacity();
  const Index start = (head_ - count + cap) % cap;
  for (Index j = 0; j < count; ++j) out.push_back(times_[static_cast<std::size_t>((start + j) % cap)]);
  return out;
}

double CoefficientHistory::latest_time() const {
  require(count_ > 0, Errc::InsufficientHistory, "history is empty");
  return times_[static_cast<std::size_t>((head_ - 1 + capacity()) % capacity())];
}

// -- AnomalyHistory ------------------------------------------------------------

AnomalyHistory::AnomalyHistory(Index max_pixels, Index capacity)
    : values_(max_pixels, capacity) {
  require(max_pixels >= 1 && capacity >= 1, Errc::BadConfig,
          "anomaly history needs positive sizes");
  ids_.reserve(static_cast<std::size_t>(max_pixels));
}

void AnomalyHistory::restart(const std::vector<Index>& set) {
  ids_ = set;
  head_ = 0;
  count_ = 0;
  tracking_ = values_.cols() > 0 && static_cast<Index>(set.size()) <= values_.rows();
}

void AnomalyHistory::clear() {
  ids_.clear();
  head_ = 0;
  count_ = 0;
  tracking_ = false;
}

MatrixXd AnomalyHistory::recent(Index count) const {
  require(tracking() && count >= 0 && count <= count_, Errc::InsufficientHistory,
          "anomaly history holds " + std::to_string(count_) + " frames");
  const Index rows = static_cast<Index>(ids_.size());
  MatrixXd out(rows, count);
  const Index cap = values_.cols();
  const Index start = (head_ - count + cap) % cap;
  for (Index j = 0; j < count; ++j) {
    out.col(j) = values_.col((start + j) % cap).head(rows);
  }
  return out;
}

// -- forecasting ---------------------------------------------------------------

VectorXd predict_state(const CoefficientHistory& history, const PodBasis& basis, Index w, Index l,
                       Index r_dmd, DmdModel* fitted) {
  require(history.rank() == basis.rank(), Errc::DimensionMismatch,
          "history rank does not match the basis");
  const Index need = w + 1 + l;
  if (history.size() < need) {
    throw Error(Errc::InsufficientHistory,
                "state prediction needs " + std::to_string(need) + " frames, have " +
                    std::to_string(history.size()),
                need);
  }
  const MatrixXd window = history.recent(need);
  const Index rank = std::min(r_dmd > 0 ? r_dmd : history.rank(), std::min(history.rank(), w + 1));
  DmdModel model = fit_dmd(window, l, rank);
  const VectorXd a_pred = dmd_predict(model, window.col(need - 1));
  VectorXd x = basis.modes * a_pred;
  if (basis.centered()) x += basis.mean;
  if (fitted) *fitted = std::move(model);
  return x;
}

VectorXd predict_anomaly(const AnomalyHistory& history, Index w, Index l, Index r_dmd) {
  const Index need = w + 1 + l;
  if (!history.tracking() || history.size() < need) {
    throw Error(Errc::InsufficientHistory,
                "anomaly prediction needs " + std::to_string(need) +
                    " frames of a stable anomaly set, have " + std::to_string(history.size()),
                need);
  }
  const MatrixXd window = history.recent(need);
  const Index rank = std::min({r_dmd, window.rows(), w + 1});
  const DmdModel model = fit_dmd(window, l, rank);
  return dmd_predict(model, window.col(need - 1));
}

VectorXd merge_predictions(const VectorXd& x_osl, const VectorXd& x_anomaly,
                           const std::vector<Index>& set) {
  require(x_anomaly.size() == static_cast<Index>(set.size()), Errc::DimensionMismatch,
          "anomaly prediction length does not match the anomaly set");
  for (Index i : set) {
    if (i < 0 || i >= x_osl.size()) {
      throw Error(Errc::IndexOutOfRange, "anomaly pixel " + std::to_string(i) + " outside frame", i);
    }
  }
  VectorXd out = x_osl;
  for (std::size_t k = 0; k < set.size(); ++k) out(set[k]) = x_anomaly(static_cast<Index>(k));
  return out;
}

nlohmann::json to_json(const PredictionBundle& b, bool with_field) {
  nlohmann::json j = {{"profile", b.profile},
                      {"horizon_steps", b.horizon_steps},
                      {"horizon_s", b.horizon_s},
                      {"issued_at", b.issued_at},
                      {"target_time", b.issued_at + b.horizon_s},
                      {"anomaly_used", b.anomaly_used},
                      {"anomaly_pixels", b.anomaly_pixels},
                      {"warnings", b.warnings}};
  if (b.x_merged.size() > 0) {
    j["min"] = b.x_merged.minCoeff();
    j["max"] = b.x_merged.maxCoeff();
  }
  if (with_field) {
    j["x_merged"] = std::vector<double>(b.x_merged.data(), b.x_merged.data() + b.x_merged.size());
  }
  return j;
}

HorizonError evaluate_rmse(double horizon_s, const Eigen::Ref<const VectorXd>& prediction,
                           const Eigen::Ref<const VectorXd>& truth) {
  require(prediction.size() == truth.size() && truth.size() > 0, Errc::DimensionMismatch,
          "prediction and truth lengths differ");
  HorizonError h;
  h.horizon_s = horizon_s;
  h.pixel_abs = (prediction - truth).cwiseAbs();
  h.rmse = std::sqrt(h.pixel_abs.squaredNorm() / static_cast<double>(truth.size()));
  h.worst_pixel_abs = h.pixel_abs.maxCoeff(&h.worst_pixel);
  h.worst_pixel_rel = h.worst_pixel_abs / kSensingSpan;
  return h;
}

std::string horizon_csv(const std::vector<HorizonError>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "horizon_s,rmse,worst_pixel_abs,worst_pixel_rel\n";
  for (const HorizonError& h : rows) {
    os << h.horizon_s << ',' << h.rmse << ',' << h.worst_pixel_abs << ',' << h.worst_pixel_rel
       << '\n';
  }
  return os.str();
}

}  // namespace twin
