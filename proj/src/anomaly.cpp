#include "thermotwin/anomaly.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <functional>

namespace twin {

void DetectorConfig::validate() const {
  require(m >= 1, Errc::BadConfig, "detector m must be >= 1");
  require(gamma1 > 0.0 && gamma2 > 0.0, Errc::BadConfig, "detector thresholds must be positive");
  require(N >= 2, Errc::BadConfig, "WMA window N must be >= 2");
  require(dt > 0.0, Errc::BadConfig, "detector dt must be positive");
  require(gradient_warmup >= 0, Errc::BadConfig, "gradient_warmup must be >= 0");
}

nlohmann::json to_json(const AnomalyReport& r) {
  return {{"t", r.t},
          {"e_max_m", r.e_max_m},
          {"wma", r.wma},
          {"grad_wma", r.grad_wma},
          {"triggered_level", r.triggered_level},
          {"triggered_gradient", r.triggered_gradient},
          {"anomaly_pixels", r.anomaly_set}};
}

double mean_of_top_m(const Eigen::Ref<const Eigen::VectorXd>& e_abs, Index m,
                     std::vector<double>& scratch) {
  require(m >= 1 && m <= e_abs.size(), Errc::MTooLarge, "m outside [1, n]");
  scratch.assign(e_abs.data(), e_abs.data() + e_abs.size());
  const auto mid = scratch.begin() + (m - 1);
  std::nth_element(scratch.begin(), mid, scratch.end(), std::greater<>());
  // Sum the m largest in sorted order so the result does not depend on how
  // the partition happened to arrange them.
  std::sort(scratch.begin(), mid + 1, std::greater<>());
  double sum = 0.0;
  for (auto it = scratch.begin(); it != mid + 1; ++it) sum += *it;
  return sum / static_cast<double>(m);
}

double wma_update(std::span<const double> history) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double w = static_cast<double>(i + 1);
    num += w * history[i];
    den += w;
  }
  return den > 0.0 ? num / den : 0.0;
}

WmaFilter::WmaFilter(Index n) : ring_(static_cast<std::size_t>(n), 0.0) {
  require(n >= 1, Errc::BadConfig, "WMA window must be >= 1");
}

double WmaFilter::push(double v) {
  const Index cap = capacity();
  ring_[static_cast<std::size_t>(head_)] = v;
  head_ = (head_ + 1) % cap;
  if (count_ < cap) ++count_;
  // Oldest held value sits at head_ - count_ (mod cap); weights run 1..count_.
  double num = 0.0;
  const Index start = (head_ - count_ + cap) % cap;
  for (Index i = 0; i < count_; ++i) {
    num += static_cast<double>(i + 1) * ring_[static_cast<std::size_t>((start + i) % cap)];
  }
  const double den = 0.5 * static_cast<double>(count_) * static_cast<double>(count_ + 1);
  return num / den;
}

Detector::Detector(DetectorConfig cfg) : cfg_(cfg), wma_((cfg.validate(), cfg.N)) {}

void Detector::set_thresholds(double gamma1, double gamma2) {
  DetectorConfig next = cfg_;
  next.gamma1 = gamma1;
  next.gamma2 = gamma2;
  next.validate();
  cfg_ = next;
}

void Detector::reset() {
  wma_.reset();
  prev_wma_ = 0.0;
  updates_ = 0;
}

void Detector::finish(AnomalyReport& out) {
  out.wma = wma_.push(out.e_max_m);
  ++updates_;
  // A gradient needs two averages; before that it is reported as zero.
  out.grad_wma = updates_ >= 2 ? std::abs(out.wma - prev_wma_) / cfg_.dt : 0.0;
  prev_wma_ = out.wma;
  out.triggered_level = out.e_max_m > cfg_.gamma1;
  out.triggered_gradient =
      updates_ >= std::max<Index>(2, cfg_.gradient_warmup) && out.grad_wma > cfg_.gamma2;

  const Index n = out.e_abs.size();
  out.anomaly_set.clear();
  if (out.anomaly_set.capacity() < static_cast<std::size_t>(n)) {
    out.anomaly_set.reserve(static_cast<std::size_t>(n));
  }
  if (out.triggered()) {
    for (Index i = 0; i < n; ++i) {
      if (out.e_abs(i) > cfg_.gamma1) out.anomaly_set.push_back(i);
    }
  }
}

}  // namespace twin
