#include "thermotwin/anomaly.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <random>

#include "support.hpp"

using namespace twin;
using Eigen::VectorXd;

TEST_CASE("top-m error on the worked example") {
  const VectorXd x = VectorXd::Zero(5);
  const VectorXd x_hat = (VectorXd(5) << 0.1, -5.0, 0.2, 3.0, -0.05).finished();
  VectorXd e_abs;
  std::vector<double> scratch;
  CHECK(top_m_error(x, x_hat, 2, e_abs, scratch) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(e_abs(1) == 5.0);
  CHECK(top_m_error(x_hat, x_hat, 2, e_abs, scratch) == 0.0);
}

TEST_CASE("top-m error matches a full-sort oracle") {
  std::vector<double> scratch;
  VectorXd e_abs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index n = 50 + static_cast<Index>(seed) * 7;
    const VectorXd x = test::random_matrix(n, 1, seed);
    const VectorXd x_hat = test::random_matrix(n, 1, seed + 100);
    std::vector<double> sorted(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = std::abs(x_hat(i) - x(i));
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    for (Index m : {Index{1}, Index{3}, n / 2, n}) {
      double sum = 0.0;
      for (Index k = 0; k < m; ++k) sum += sorted[static_cast<std::size_t>(k)];
      CHECK(std::abs(top_m_error(x, x_hat, m, e_abs, scratch) - sum / static_cast<double>(m)) <=
            1e-12);
    }
  }
}

TEST_CASE("top-m error rejects bad arguments") {
  VectorXd e_abs;
  std::vector<double> scratch;
  try {
    top_m_error(VectorXd::Zero(3), VectorXd::Zero(4), 1, e_abs, scratch);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimensionMismatch);
  }
  try {
    top_m_error(VectorXd::Zero(3), VectorXd::Zero(3), 4, e_abs, scratch);
    FAIL("expected MTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MTooLarge);
  }
}

TEST_CASE("WMA arithmetic") {
  const double two[] = {3.0, 6.0};
  CHECK(wma_update(two) == doctest::Approx(5.0).epsilon(1e-15));
  const std::vector<double> flat(17, 2.5);
  CHECK(wma_update(flat) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("WMA ring agrees with direct summation on a ramp") {
  for (Index N : {Index{2}, Index{5}, Index{100}}) {
    WmaFilter f(N);
    std::vector<double> all;
    for (int k = 0; k < 250; ++k) {
      const double v = 3.5 * k;
      all.push_back(v);
      const std::size_t len = std::min<std::size_t>(all.size(), static_cast<std::size_t>(N));
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double w = static_cast<double>(i + 1);
        num += w * all[all.size() - len + i];
        den += w;
      }
      CHECK(std::abs(f.push(v) - num / den) <= 1e-12 * std::max(1.0, v));
    }
    CHECK(f.size() == N);
  }
}

TEST_CASE("exact reconstruction never triggers") {
  Detector d;
  const VectorXd x = test::random_matrix(500, 1, 1);
  AnomalyReport r;
  for (int k = 0; k < 300; ++k) {
    d.detect(x, x, 3.5 * k, r);
    CHECK_FALSE(r.triggered());
    CHECK(r.anomaly_set.empty());
    CHECK(r.e_max_m == 0.0);
  }
}

TEST_CASE("level trigger and anomaly set on a step patch") {
  const Index n = 2000;
  VectorXd x = 20.0 * VectorXd::Ones(n);
  VectorXd x_hat = x + 0.1 * test::random_matrix(n, 1, 4);
  Detector d;
  AnomalyReport r;
  for (int k = 0; k < 10; ++k) {
    d.detect(x, x_hat, 3.5 * k, r);
    REQUIRE_FALSE(r.triggered());
  }
  // A +3 degC step on a 40-pixel patch: 40 of the top 100 errors jump by 3.
  for (Index i = 600; i < 640; ++i) x(i) -= 3.0;
  d.detect(x, x_hat, 35.0, r);
  CHECK(r.triggered_level);
  REQUIRE_FALSE(r.anomaly_set.empty());
  const auto inside = std::count_if(r.anomaly_set.begin(), r.anomaly_set.end(),
                                    [](Index i) { return i >= 600 && i < 640; });
  CHECK(2 * inside >= static_cast<long>(r.anomaly_set.size()));
}

TEST_CASE("anomaly set is exactly the over-threshold pixels while triggered") {
  DetectorConfig cfg;
  cfg.m = 5;
  Detector d(cfg);
  AnomalyReport r;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const VectorXd x = VectorXd::Zero(200);
    const VectorXd x_hat = 1.2 * test::random_matrix(200, 1, 50 + seed);
    d.detect(x, x_hat, 3.5 * static_cast<double>(seed), r);
    std::vector<Index> naive;
    if (r.triggered()) {
      for (Index i = 0; i < 200; ++i) {
        if (std::abs(x_hat(i)) > cfg.gamma1) naive.push_back(i);
      }
    }
    CHECK(r.anomaly_set == naive);
    if (!r.anomaly_set.empty()) CHECK(r.triggered());
  }
}

TEST_CASE("slow sub-threshold drift never triggers") {
  // A patch whose error grows at 0.005 degC/s and stays below gamma1.
  const Index n = 1000;
  const VectorXd x = VectorXd::Zero(n);
  VectorXd x_hat = VectorXd::Zero(n);
  Detector d;
  AnomalyReport r;
  for (int k = 0; k < 50; ++k) {
    const double t = 3.5 * k;
    x_hat.head(40).setConstant(0.005 * t);
    d.detect(x, x_hat, t, r);
    CHECK_FALSE(r.triggered());
  }
  CHECK(r.e_max_m < 1.0);
}

TEST_CASE("no gradient trigger before two WMA updates") {
  DetectorConfig cfg;
  cfg.gamma1 = 1e6;
  cfg.gradient_warmup = 0;
  Detector d(cfg);
  const VectorXd x = VectorXd::Zero(200);
  AnomalyReport r;
  d.detect(x, VectorXd::Constant(200, 50.0), 0.0, r);
  CHECK(r.grad_wma == 0.0);
  CHECK_FALSE(r.triggered_gradient);
  d.detect(x, VectorXd::Constant(200, 100.0), 3.5, r);
  CHECK(r.triggered_gradient);
}

TEST_CASE("gradient rule waits for the configured number of updates") {
  DetectorConfig cfg;
  cfg.gamma1 = 1e6;
  cfg.gradient_warmup = 5;
  Detector d(cfg);
  const VectorXd x = VectorXd::Zero(200);
  AnomalyReport r;
  // Every step is far above gamma2, so only the gate decides.
  for (int k = 0; k < 8; ++k) {
    d.detect(x, VectorXd::Constant(200, 10.0 * (k + 1)), 3.5 * k, r);
    CHECK(r.triggered_gradient == (d.updates() >= 5));
    if (k >= 1) CHECK(r.grad_wma > cfg.gamma2);
  }
}

TEST_CASE("larger anomalies never shrink the anomaly set") {
  const Index n = 400;
  const VectorXd base = 0.05 * test::random_matrix(n, 1, 9);
  const VectorXd bump = test::random_matrix(n, 1, 10).cwiseAbs();
  std::vector<Index> prev;
  for (double scale : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    DetectorConfig cfg;
    cfg.m = 10;
    Detector d(cfg);
    const VectorXd x_hat = base + scale * bump;
    const AnomalyReport r = d.detect(VectorXd::Zero(n), x_hat, 0.0);
    CHECK(std::includes(r.anomaly_set.begin(), r.anomaly_set.end(), prev.begin(), prev.end()));
    prev = r.anomaly_set;
  }
  CHECK_FALSE(prev.empty());
}

TEST_CASE("replaying a stream gives identical reports") {
  auto run = [] {
    Detector d;
    std::vector<nlohmann::json> out;
    AnomalyReport r;
    for (int k = 0; k < 40; ++k) {
      const VectorXd x = test::random_matrix(300, 1, 7 + static_cast<std::uint64_t>(k));
      const VectorXd x_hat = x + (k > 20 ? 2.0 : 0.3) * test::random_matrix(300, 1, 900 + static_cast<std::uint64_t>(k));
      d.detect(x, x_hat, 3.5 * k, r);
      out.push_back(to_json(r));
    }
    return out;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].dump() == b[i].dump());
  CHECK(a.back().contains("anomaly_pixels"));
}

TEST_CASE("detector config validation") {
  DetectorConfig c;
  c.N = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.gamma2 = 0.0;
  CHECK_THROWS_AS(Detector{c}, Error);
  Detector d;
  CHECK_THROWS_AS(d.set_thresholds(-1.0, 0.01), Error);
  d.set_thresholds(2.0, 0.02);
  CHECK(d.config().gamma1 == 2.0);
}
