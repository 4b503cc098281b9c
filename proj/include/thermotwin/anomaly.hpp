#pragma once

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <algorithm>
#include <span>
#include <vector>

#include "thermotwin/error.hpp"

namespace twin {

using Index = Eigen::Index;

struct DetectorConfig {
  Index m = 100;        // top-error count
  double gamma1 = 1.0;  // level threshold, degC
  double gamma2 = 0.01; // gradient threshold, degC/s
  Index N = 100;        // WMA window
  double dt = 3.5;      // sample interval, s
  /// WMA updates required before the gradient rule may fire. Early averages
  /// hold few samples, so frame-to-frame jitter moves them by 2/(c+1) of its
  /// size; at 10 a jitter must exceed 0.19 degC to reach the default gamma2.
  Index gradient_warmup = 10;

  void validate() const;
};

struct AnomalyReport {
  double t = 0.0;
  Eigen::VectorXd e_abs;
  double e_max_m = 0.0;
  double wma = 0.0;
  double grad_wma = 0.0;
  bool triggered_level = false;
  bool triggered_gradient = false;
  std::vector<Index> anomaly_set;  // ascending

  bool triggered() const noexcept { return triggered_level || triggered_gradient; }
};

nlohmann::json to_json(const AnomalyReport& r);

/// Mean of the m largest entries of `e_abs`. `scratch` is reused across calls.
double mean_of_top_m(const Eigen::Ref<const Eigen::VectorXd>& e_abs, Index m,
                     std::vector<double>& scratch);

/// e_abs = |x_hat - x| elementwise; returns the mean of its m largest values.
template <typename A, typename B>
double top_m_error(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x_hat, Index m,
                   Eigen::VectorXd& e_abs, std::vector<double>& scratch) {
  require(x.size() == x_hat.size(), Errc::DimensionMismatch,
          "frame and reconstruction lengths differ");
  if (m < 1 || m > x.size()) {
    throw Error(Errc::MTooLarge,
                "m=" + std::to_string(m) + " must lie in [1, " + std::to_string(x.size()) + "]");
  }
  if (e_abs.size() != x.size()) e_abs.resize(x.size());
  e_abs = (x_hat.template cast<double>() - x.template cast<double>()).cwiseAbs();
  return mean_of_top_m(e_abs, m, scratch);
}

/// Linearly weighted mean of `history` (oldest first): weight i for the i-th
/// oldest, so the newest value carries weight history.size().
double wma_update(std::span<const double> history);

/// Fixed-capacity ring of the last N top-m errors.
class WmaFilter {
 public:
  explicit WmaFilter(Index n = 100);

  /// Appends a value and returns the weighted average over what is held.
  double push(double v);
  Index size() const noexcept { return count_; }
  Index capacity() const noexcept { return static_cast<Index>(ring_.size()); }
  void reset() noexcept { count_ = 0; head_ = 0; }

 private:
  std::vector<double> ring_;
  Index head_ = 0;   // next write position
  Index count_ = 0;
};

/// Streaming detector; one per frame stream.
class Detector {
 public:
  explicit Detector(DetectorConfig cfg = {});

  /// Scores one frame against its reconstruction and advances the state.
  /// `out` keeps its buffers between calls so steady-state use does not
  /// allocate.
  template <typename A, typename B>
  void detect(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x_hat, double t,
              AnomalyReport& out) {
    out.t = t;
    out.e_max_m = top_m_error(x, x_hat, cfg_.m, out.e_abs, scratch_);
    finish(out);
  }

  AnomalyReport detect(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat, double t) {
    AnomalyReport r;
    detect(x, x_hat, t, r);
    return r;
  }

  const DetectorConfig& config() const noexcept { return cfg_; }
  /// Thresholds may be retuned live; the WMA history is kept.
  void set_thresholds(double gamma1, double gamma2);
  Index updates() const noexcept { return updates_; }
  void reset();

 private:
  void finish(AnomalyReport& out);

  DetectorConfig cfg_;
  WmaFilter wma_;
  double prev_wma_ = 0.0;
  Index updates_ = 0;
  std::vector<double> scratch_;
};

}  // namespace twin
