#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "thermotwin/error.hpp"

namespace twin {

/// Principal component pursuit parameters. An empty lambda or mu selects the
/// data-driven value: lambda = 1/sqrt(max(n, w)), mu = n*w / (4 ||X||_1).
struct RpcaParams {
  std::optional<double> lambda;
  std::optional<double> mu;
  double tol = 1e-7;
  int max_iter = 500;

  static RpcaParams automatic() { return {}; }
  /// The constants tuned for the original camera data.
  static RpcaParams camera() { return {0.001, 1e-5, 1e-7, 500}; }

  void validate() const;
};

struct RpcaResult {
  Eigen::MatrixXd L;
  Eigen::MatrixXd S;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;  // ||X - L - S||_F / ||X||_F
  double lambda = 0.0;    // values actually used
  double mu = 0.0;
};

/// Elementwise soft threshold sign(v) * max(|v| - tau, 0), written as
/// max(v - tau, 0) + min(v + tau, 0) so it vectorises.
inline double shrink(double v, double tau) {
  return std::max(v - tau, 0.0) + std::min(v + tau, 0.0);
}

template <typename Derived>
auto shrink(const Eigen::MatrixBase<Derived>& X, typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  return ((X.array() - tau).max(Scalar(0)) + (X.array() + tau).min(Scalar(0))).matrix();
}

/// Singular value threshold: U diag(max(sigma - tau, 0)) V^T.
Eigen::MatrixXd svt(const Eigen::MatrixXd& Y, double tau, Eigen::Index* kept = nullptr);
void svt_into(const Eigen::MatrixXd& Y, double tau, Eigen::MatrixXd& out,
              Eigen::Index* kept = nullptr);

/// Largest singular value via the smaller Gram matrix.
double thin_spectral_norm(const Eigen::MatrixXd& X);

RpcaResult rpca(const Eigen::MatrixXd& X, const RpcaParams& params = {});

template <typename Derived>
RpcaResult rpca(const Eigen::MatrixBase<Derived>& X, const RpcaParams& params = {}) {
  return rpca(Eigen::MatrixXd(X.template cast<double>()), params);
}

struct RpcaBenchRow {
  Eigen::Index n = 0;
  Eigen::Index w = 0;
  int rep = 0;
  double seconds = 0.0;
  int iterations = 0;
};

/// Times rpca on a synthetic smooth-field-plus-spikes window for each w.
std::vector<RpcaBenchRow> rpca_bench(Eigen::Index n, const std::vector<Eigen::Index>& windows,
                                     int reps, const RpcaParams& params = {},
                                     std::uint64_t seed = 1);

/// CSV with header n,w,rep,seconds.
std::string bench_csv(const std::vector<RpcaBenchRow>& rows);

}  // namespace twin
