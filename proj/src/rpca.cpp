#include "thermotwin/rpca.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

namespace twin {

using Eigen::Index;
using Eigen::MatrixXd;

void RpcaParams::validate() const {
  require(!lambda || *lambda > 0.0, Errc::BadConfig, "rpca lambda must be > 0");
  require(!mu || *mu > 0.0, Errc::BadConfig, "rpca mu must be > 0");
  require(tol > 0.0, Errc::BadConfig, "rpca tol must be > 0");
  require(max_iter >= 1, Errc::BadConfig, "rpca max_iter must be >= 1");
}

namespace {

// Large tall or wide inputs go through the eigen-decomposition of the small
// Gram matrix; the thresholded product is then one more GEMM against Y and
// U never needs forming.
constexpr Index kGramMinSize = 200'000;

struct GramShrink {
  MatrixXd basis;   // c x k eigenvectors with sigma > tau
  MatrixXd scaled;  // k x c, diag(1 - tau/sigma) basis^T
};

GramShrink gram_shrink(const MatrixXd& G, double tau, Index* kept) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
  const Eigen::VectorXd sigma = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  // Eigenvalues ascend, so the kept ones are a trailing block.
  Index k = 0;
  while (k < sigma.size() && sigma(sigma.size() - 1 - k) > tau) ++k;
  if (kept != nullptr) *kept = k;
  GramShrink out;
  out.basis = es.eigenvectors().rightCols(k);
  const Eigen::VectorXd scale = (1.0 - tau / sigma.tail(k).array()).matrix();
  out.scaled = scale.asDiagonal() * out.basis.transpose();
  return out;
}

MatrixXd gram_of(const MatrixXd& Y, bool columns) {
  const Index c = columns ? Y.cols() : Y.rows();
  MatrixXd G = MatrixXd::Zero(c, c);
  if (columns) {
    G.selfadjointView<Eigen::Lower>().rankUpdate(Y.transpose());
  } else {
    G.selfadjointView<Eigen::Lower>().rankUpdate(Y);
  }
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

}  // namespace

void svt_into(const MatrixXd& Y, double tau, MatrixXd& out, Index* kept) {
  const Index m = Y.rows();
  const Index c = Y.cols();
  out.resize(m, c);
  if (m * c > kGramMinSize && m >= 4 * c) {
    const GramShrink g = gram_shrink(gram_of(Y, true), tau, kept);
    if (g.basis.cols() == 0) {
      out.setZero();
    } else {
      // Only the k kept directions are applied: (Y V_k) diag V_k^T.
      out.noalias() = (Y * g.basis) * g.scaled;
    }
    return;
  }
  if (m * c > kGramMinSize && c >= 4 * m) {
    const GramShrink g = gram_shrink(gram_of(Y, false), tau, kept);
    if (g.basis.cols() == 0) {
      out.setZero();
    } else {
      out.noalias() = g.scaled.transpose() * (g.basis.transpose() * Y);
    }
    return;
  }
  Eigen::BDCSVD<MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  require(svd.info() == Eigen::Success, Errc::SvdFailure, "SVT decomposition failed");
  const Eigen::VectorXd& s = svd.singularValues();
  Index k = 0;
  while (k < s.size() && s(k) > tau) ++k;
  if (kept != nullptr) *kept = k;
  if (k == 0) {
    out.setZero();
    return;
  }
  out.noalias() = svd.matrixU().leftCols(k) *
                  (s.head(k).array() - tau).matrix().asDiagonal() *
                  svd.matrixV().leftCols(k).transpose();
}

MatrixXd svt(const MatrixXd& Y, double tau, Index* kept) {
  MatrixXd out;
  svt_into(Y, tau, out, kept);
  return out;
}

RpcaResult rpca(const MatrixXd& X, const RpcaParams& params) {
  params.validate();
  require(X.size() >= 1, Errc::NoData, "rpca on an empty window");
  require(X.allFinite(), Errc::NonFiniteInput, "rpca input has non-finite entries");

  const Index n = X.rows();
  const Index w = X.cols();
  RpcaResult out;
  out.L = MatrixXd::Zero(n, w);
  out.S = MatrixXd::Zero(n, w);

  const double norm_x = X.norm();
  const double l1 = X.cwiseAbs().sum();
  out.lambda = params.lambda.value_or(1.0 / std::sqrt(static_cast<double>(std::max(n, w))));
  out.mu = params.mu.value_or(l1 > 0.0 ? static_cast<double>(n * w) / (4.0 * l1) : 1.0);
  if (norm_x == 0.0) {
    out.converged = true;
    return out;
  }

  const double spectral = thin_spectral_norm(X);
  const double inf_norm = X.cwiseAbs().maxCoeff() / out.lambda;
  // Scaled multiplier Y = Lambda / mu keeps each update a plain sum.
  MatrixXd Y = X / (std::max(spectral, inf_norm) * out.mu);
  const double s_tau = out.lambda / out.mu;
  const double l_tau = 1.0 / out.mu;

  // Large windows are memory bound, so the elementwise work of one iteration
  // (multiplier update, residuals, the next S step and the next SVT input)
  // runs as a single sweep over the data.
  MatrixXd T(n, w);
  MatrixXd L_next(n, w);
  MatrixXd S_next(n, w);
  out.S = shrink(X + Y, s_tau);
  T = X - out.S + Y;

  const Index size = X.size();
  const double* x = X.data();
  double* y = Y.data();
  double* t = T.data();
  for (int it = 1; it <= params.max_iter; ++it) {
    svt_into(T, l_tau, L_next, nullptr);
    const double* ln = L_next.data();
    const double* lo = out.L.data();
    const double* sc = out.S.data();
    double* sn = S_next.data();
    double res_sq = 0.0;
    double step_sq = 0.0;
    for (Index k = 0; k < size; ++k) {
      const double r = x[k] - ln[k] - sc[k];
      const double d = ln[k] - lo[k];
      const double yk = y[k] + r;
      y[k] = yk;
      res_sq += r * r;
      step_sq += d * d;
      const double s_new = shrink(x[k] - ln[k] + yk, s_tau);
      sn[k] = s_new;
      t[k] = x[k] - s_new + yk;
    }
    out.L.swap(L_next);
    out.iterations = it;
    out.residual = std::sqrt(res_sq) / norm_x;
    // Primal feasibility alone can be met early by a dense S; the L step
    // must have settled too.
    if (out.residual < params.tol && std::sqrt(step_sq) / norm_x < params.tol) {
      out.converged = true;
      break;
    }
    out.S.swap(S_next);
  }
  return out;
}

double thin_spectral_norm(const MatrixXd& X) {
  const Index m = X.rows();
  const Index c = X.cols();
  MatrixXd G;
  if (m >= c) {
    G = MatrixXd::Zero(c, c);
    G.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  } else {
    G = MatrixXd::Zero(m, m);
    G.selfadjointView<Eigen::Lower>().rankUpdate(X);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

std::vector<RpcaBenchRow> rpca_bench(Index n, const std::vector<Index>& windows, int reps,
                                     const RpcaParams& params, std::uint64_t seed) {
  require(!windows.empty(), Errc::BadConfig, "bench needs at least one window");
  require(n >= 1 && reps >= 1, Errc::BadConfig, "bench needs n >= 1 and reps >= 1");
  std::vector<RpcaBenchRow> rows;
  for (Index w : windows) {
    require(w >= 1, Errc::BadConfig, "bench window must be >= 1");
    // Two smooth spatial shapes with exponential time courses plus 1% spikes
    // and sensor noise: roughly what a heating plate window looks like.
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(w));
    std::normal_distribution<double> noise(0.0, 0.05);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Eigen::ArrayXd x = Eigen::ArrayXd::LinSpaced(n, 0.0, 1.0);
    const Eigen::VectorXd a = (20.0 + 30.0 * (-(x - 0.5).square() * 8.0).exp()).matrix();
    const Eigen::VectorXd b = (3.0 * (6.2831853 * x).sin()).matrix();
    const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(w, 0.0, 1.0);
    const Eigen::VectorXd ca = (1.0 - 0.3 * (-3.0 * t).exp()).matrix();
    const Eigen::VectorXd cb = (-2.0 * t).exp().matrix();
    MatrixXd X = a * ca.transpose() + b * cb.transpose();
    for (Index j = 0; j < w; ++j) {
      for (Index i = 0; i < n; ++i) {
        X(i, j) += noise(rng);
        if (unit(rng) < 0.01) X(i, j) -= 5.0;
      }
    }
    for (int rep = 0; rep < reps; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      const RpcaResult r = rpca(X, params);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      rows.push_back({n, w, rep, dt.count(), r.iterations});
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<RpcaBenchRow>& rows) {
  std::ostringstream out;
  out << "n,w,rep,seconds\n";
  out.precision(6);
  for (const auto& r : rows) out << r.n << ',' << r.w << ',' << r.rep << ',' << r.seconds << '\n';
  return out.str();
}

}  // namespace twin
