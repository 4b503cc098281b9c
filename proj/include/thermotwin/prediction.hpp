#pragma once

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "thermotwin/decomposition.hpp"
#include "thermotwin/error.hpp"

namespace twin {

/// Forecast settings: state DMD over the last w+1+l coefficient vectors, and
/// anomaly DMD over the last anomaly_w+1+l frames of a stable anomaly set.
struct PredictionProfile {
  std::string name = "w100_l100";
  Index w = 100;
  Index l = 100;
  Index anomaly_w = 20;
  Index state_rank = 0;    // 0: all POD coefficients
  Index anomaly_rank = 3;  // capped by |S| and anomaly_w + 1

  Index state_frames() const noexcept { return w + 1 + l; }
  Index anomaly_frames() const noexcept { return anomaly_w + 1 + l; }
  void validate() const;
};

/// State profiles for w in {100,200,300} x l in {100,300}, anomaly w = 20.
std::vector<PredictionProfile> default_profiles();

/// Ring of the most recent coefficient vectors a(t), oldest first on read.
class CoefficientHistory {
 public:
  CoefficientHistory() = default;
  CoefficientHistory(Index r, Index capacity);

  void push(const Eigen::Ref<const Eigen::VectorXd>& a, double t);
  void clear() noexcept { count_ = 0; head_ = 0; }

  Index rank() const noexcept { return data_.rows(); }
  Index size() const noexcept { return count_; }
  Index capacity() const noexcept { return data_.cols(); }
  /// The newest `count` columns in time order.
  Eigen::MatrixXd recent(Index count) const;
  std::vector<double> recent_times(Index count) const;
  double latest_time() const;

 private:
  Eigen::MatrixXd data_;
  std::vector<double> times_;
  Index head_ = 0;
  Index count_ = 0;
};

/// Raw values of the current anomaly set, restarted whenever its membership
/// changes. Sets larger than `max_pixels` are not tracked.
class AnomalyHistory {
 public:
  AnomalyHistory() = default;
  AnomalyHistory(Index max_pixels, Index capacity);

  /// Appends the frame values at `set`; resets first if the set differs.
  template <typename Derived>
  void update(const std::vector<Index>& set, const Eigen::MatrixBase<Derived>& frame) {
    if (set != ids_) restart(set);
    if (ids_.empty() || !tracking_) return;
    const Index cap = values_.cols();
    for (std::size_t k = 0; k < ids_.size(); ++k) {
      values_(static_cast<Index>(k), head_) = static_cast<double>(frame(ids_[k]));
    }
    head_ = (head_ + 1) % cap;
    if (count_ < cap) ++count_;
  }

  void clear();
  const std::vector<Index>& pixel_ids() const noexcept { return ids_; }
  bool tracking() const noexcept { return tracking_ && !ids_.empty(); }
  /// Frames accumulated since the set last changed.
  Index size() const noexcept { return count_; }
  /// |S| x count matrix of the newest frames, oldest first.
  Eigen::MatrixXd recent(Index count) const;

 private:
  void restart(const std::vector<Index>& set);

  std::vector<Index> ids_;
  Eigen::MatrixXd values_;  // max_pixels x capacity
  Index head_ = 0;
  Index count_ = 0;
  bool tracking_ = false;
};

/// l-step forecast of the full frame from the coefficient history.
Eigen::VectorXd predict_state(const CoefficientHistory& history, const PodBasis& basis, Index w,
                              Index l, Index r_dmd = 0, DmdModel* fitted = nullptr);

/// l-step forecast of the anomaly pixels.
Eigen::VectorXd predict_anomaly(const AnomalyHistory& history, Index w, Index l, Index r_dmd = 3);

/// x_osl with the entries at `set` replaced by x_anomaly (bit-exact copies).
Eigen::VectorXd merge_predictions(const Eigen::VectorXd& x_osl, const Eigen::VectorXd& x_anomaly,
                                  const std::vector<Index>& set);

struct PredictionBundle {
  std::string profile;
  Index horizon_steps = 0;
  double horizon_s = 0.0;
  double issued_at = 0.0;  // time of the newest frame used
  Eigen::VectorXd x_osl_pred;
  std::vector<Index> anomaly_pixels;
  Eigen::VectorXd x_anomaly_pred;
  Eigen::VectorXd x_merged;
  bool anomaly_used = false;
  std::vector<std::string> warnings;
};

/// Metadata plus, when `with_field` is set, the merged frame.
nlohmann::json to_json(const PredictionBundle& b, bool with_field);

/// Sensing span used for relative errors (-20 to 150 degC).
inline constexpr double kSensingSpan = 170.0;

struct HorizonError {
  double horizon_s = 0.0;
  double rmse = 0.0;
  double worst_pixel_abs = 0.0;
  double worst_pixel_rel = 0.0;
  Index worst_pixel = -1;
  Eigen::VectorXd pixel_abs;
};

HorizonError evaluate_rmse(double horizon_s, const Eigen::Ref<const Eigen::VectorXd>& prediction,
                           const Eigen::Ref<const Eigen::VectorXd>& truth);

/// horizon_s,rmse,worst_pixel_abs,worst_pixel_rel
std::string horizon_csv(const std::vector<HorizonError>& rows);

}  // namespace twin
