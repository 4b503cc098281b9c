#include "thermotwin/decomposition.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "thermotwin/archive.hpp"

namespace twin {

namespace {

constexpr Index kChunk = 64;

template <typename Scalar>
bool all_finite(const ColumnBlocks<Scalar>& X) {
  for (const auto& b : X.blocks()) {
    if (!b.allFinite()) return false;
  }
  return true;
}

template <typename Scalar>
Eigen::VectorXd row_mean(const ColumnBlocks<Scalar>& X) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(X.rows());
  for (const auto& b : X.blocks()) sum += b.template cast<double>().rowwise().sum();
  return sum / static_cast<double>(X.cols());
}

/// Visit X (minus `mean` if non-empty) in double-precision column chunks.
template <typename Scalar, typename Fn>
void for_each_chunk(const ColumnBlocks<Scalar>& X, const Eigen::VectorXd& mean, Fn&& fn) {
  Eigen::MatrixXd chunk;
  Index offset = 0;
  for (const auto& b : X.blocks()) {
    for (Index c = 0; c < b.cols(); c += kChunk) {
      const Index len = std::min(kChunk, b.cols() - c);
      chunk = b.middleCols(c, len).template cast<double>();
      if (mean.size() != 0) chunk.colwise() -= mean;
      fn(chunk, offset + c);
    }
    offset += b.cols();
  }
}

template <typename Scalar>
Eigen::MatrixXd dense_copy(const ColumnBlocks<Scalar>& X, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd out(X.rows(), X.cols());
  for_each_chunk(X, mean, [&](const Eigen::MatrixXd& c, Index at) { out.middleCols(at, c.cols()) = c; });
  return out;
}

/// Flip each mode so its largest-magnitude entry is positive.
void canonical_signs(Eigen::MatrixXd& U, Eigen::MatrixXd& V) {
  for (Index i = 0; i < U.cols(); ++i) {
    Index at = 0;
    U.col(i).cwiseAbs().maxCoeff(&at);
    if (U(at, i) < 0.0) {
      U.col(i) = -U.col(i);
      V.col(i) = -V.col(i);
    }
  }
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& Y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(Y.rows(), Y.cols());
}

template <typename Scalar>
PodBasis svd_impl(const ColumnBlocks<Scalar>& X, Index r, const SvdOptions& opts) {
  const Index n = X.rows();
  const Index k = X.cols();
  require(n >= 1 && k >= 1, Errc::NoData, "empty snapshot matrix");
  const Index full = std::min(n, k);
  require(r >= 1 && r <= full, Errc::RankTooLarge,
          "rank " + std::to_string(r) + " outside [1, " + std::to_string(full) + "]");
  require(all_finite(X), Errc::NonFiniteInput, "snapshot matrix has non-finite entries");

  PodBasis basis;
  basis.full_rank = full;
  Eigen::VectorXd mean;
  if (opts.center) mean = row_mean(X);

  double energy = 0.0;
  for_each_chunk(X, mean, [&](const Eigen::MatrixXd& c, Index) { energy += c.squaredNorm(); });
  basis.total_energy = energy;

  const Index block = std::min(r + opts.oversample, full);
  const bool direct = n * k <= opts.direct_limit || block >= full;

  if (direct) {
    const Eigen::MatrixXd D = dense_copy(X, mean);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinU | Eigen::ComputeThinV);
    require(svd.info() == Eigen::Success, Errc::SvdFailure, "BDCSVD did not converge");
    basis.modes = svd.matrixU().leftCols(r);
    basis.singular_values = svd.singularValues().head(r);
    basis.right_vectors = svd.matrixV().leftCols(r);
  } else {
    // Subspace iteration on X X^T; one pass over the data per sweep.
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd omega(k, block);
    for (Index j = 0; j < omega.cols(); ++j) {
      for (Index i = 0; i < omega.rows(); ++i) omega(i, j) = normal(rng);
    }
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, block);
    for_each_chunk(X, mean, [&](const Eigen::MatrixXd& c, Index at) {
      Y.noalias() += c * omega.middleRows(at, c.cols());
    });
    Eigen::MatrixXd Q = orthonormalize(Y);

    bool converged = false;
    for (int it = 0; it < opts.max_iter && !converged; ++it) {
      Y.setZero();
      for_each_chunk(X, mean, [&](const Eigen::MatrixXd& c, Index) {
        Y.noalias() += c * (c.transpose() * Q);
      });
      const Eigen::MatrixXd B = Q.transpose() * Y;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (B + B.transpose()));
      const Eigen::VectorXd lam = es.eigenvalues().reverse();
      const Eigen::MatrixXd W = es.eigenvectors().rowwise().reverse();
      const double scale = std::max(lam(0), 0.0);
      if (scale == 0.0) {
        converged = true;
      } else {
        const Eigen::MatrixXd R = Y * W.leftCols(r) - Q * W.leftCols(r) * lam.head(r).asDiagonal();
        converged = R.colwise().norm().maxCoeff() <= opts.tol * scale;
      }
      Q = orthonormalize(Y);
    }
    require(converged, Errc::SvdFailure, "subspace iteration did not converge");

    // Rayleigh-Ritz on the converged subspace: X ~= Q (X^T Q)^T.
    Eigen::MatrixXd Z(k, block);
    for_each_chunk(X, mean, [&](const Eigen::MatrixXd& c, Index at) {
      Z.middleRows(at, c.cols()).noalias() = c.transpose() * Q;
    });
    Eigen::BDCSVD<Eigen::MatrixXd> small(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    require(small.info() == Eigen::Success, Errc::SvdFailure, "Ritz SVD did not converge");
    basis.modes = Q * small.matrixV().leftCols(r);
    basis.singular_values = small.singularValues().head(r);
    basis.right_vectors = small.matrixU().leftCols(r);
  }
  canonical_signs(basis.modes, basis.right_vectors);
  basis.mean = std::move(mean);
  return basis;
}

}  // namespace

PodBasis truncated_svd(const ColumnBlocks<float>& X, Index r, const SvdOptions& opts) {
  return svd_impl(X, r, opts);
}

PodBasis truncated_svd(const ColumnBlocks<double>& X, Index r, const SvdOptions& opts) {
  return svd_impl(X, r, opts);
}

double pod_energy_ratio(const PodBasis& basis, Index r) {
  require(r >= 0 && r <= basis.rank(), Errc::RankTooLarge,
          "energy ratio rank exceeds retained rank");
  if (basis.total_energy <= 0.0) return 1.0;
  const double captured = basis.singular_values.head(r).squaredNorm();
  return std::clamp(captured / basis.total_energy, 0.0, 1.0);
}

ThinSvd thin_svd(const Eigen::MatrixXd& Y, bool want_u) {
  ThinSvd out;
  const Index m = Y.rows();
  const Index c = Y.cols();
  if (m >= 4 * c && m * c > 200'000) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(c, c);
    G.selfadjointView<Eigen::Lower>().rankUpdate(Y.transpose());
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    out.sigma = es.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
    out.V = es.eigenvectors().rowwise().reverse();
    if (want_u) {
      out.U = Y * out.V;
      for (Index i = 0; i < c; ++i) {
        if (out.sigma(i) > 0.0) {
          out.U.col(i) /= out.sigma(i);
        } else {
          out.U.col(i).setZero();
        }
      }
    }
    return out;
  }
  const unsigned flags = want_u ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : Eigen::ComputeThinV;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Y, flags);
  require(svd.info() == Eigen::Success, Errc::SvdFailure, "BDCSVD did not converge");
  out.sigma = svd.singularValues();
  out.V = svd.matrixV();
  if (want_u) out.U = svd.matrixU();
  return out;
}

// -- DMD ----------------------------------------------------------------------

DmdModel fit_dmd_window(const Eigen::MatrixXd& window, Index l, Index r_dmd) {
  require(l >= 1, Errc::WindowTooShort, "shift l must be >= 1");
  const Index w = window.cols() - 1 - l;
  require(w >= 1, Errc::WindowTooShort,
          "window of " + std::to_string(window.cols()) + " columns cannot hold w>=1 and l=" +
              std::to_string(l));
  require(window.allFinite(), Errc::NonFiniteInput, "DMD window has non-finite entries");
  require(r_dmd >= 1 && r_dmd <= std::min(window.rows(), w + 1), Errc::RankTooLarge,
          "DMD rank exceeds min(rows, w+1)");

  const auto X = window.leftCols(w + 1);
  const auto Xp = window.middleCols(l, w + 1);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  require(svd.info() == Eigen::Success, Errc::SvdFailure, "DMD SVD did not converge");
  const Eigen::VectorXd& s = svd.singularValues();
  require(s.size() > 0 && s(0) > 0.0, Errc::SingularSigma, "DMD window is identically zero");

  DmdModel model;
  model.requested_rank = r_dmd;
  model.w = w;
  model.l = l;
  model.ambient_dim = window.rows();

  Index r = 0;
  while (r < r_dmd && s(r) >= kDmdSigmaFloor * s(0)) ++r;
  if (r < r_dmd) {
    model.warnings.push_back("SingularSigma: rank reduced from " + std::to_string(r_dmd) +
                             " to " + std::to_string(r));
  }
  model.r_dmd = r;

  const Eigen::MatrixXd Ur = svd.matrixU().leftCols(r);
  const Eigen::MatrixXd Vr = svd.matrixV().leftCols(r);
  const Eigen::MatrixXd M = Xp * Vr * s.head(r).cwiseInverse().asDiagonal();
  const Eigen::MatrixXd reduced = Ur.transpose() * M;

  Eigen::EigenSolver<Eigen::MatrixXd> es(reduced);
  require(es.info() == Eigen::Success, Errc::SvdFailure, "DMD eigensolver failed");
  Eigen::VectorXcd lam = es.eigenvalues();
  Eigen::MatrixXcd vec = es.eigenvectors();

  std::vector<Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ma = std::abs(lam(a));
    const double mb = std::abs(lam(b));
    if (ma != mb) return ma > mb;
    return lam(a).imag() > lam(b).imag();
  });
  model.eig_values.resize(r);
  Eigen::MatrixXcd v(r, r);
  for (Index i = 0; i < r; ++i) {
    model.eig_values(i) = lam(order[static_cast<std::size_t>(i)]);
    v.col(i) = vec.col(order[static_cast<std::size_t>(i)]);
  }

  model.exact_modes = M.cast<std::complex<double>>() * v;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(model.exact_modes);
  model.pseudo_inverse_P = cod.pseudoInverse();
  return model;
}

Eigen::MatrixXd dmd_predict(const DmdModel& model, const Eigen::MatrixXd& x_recent,
                            double* imag_residual) {
  require(x_recent.rows() == model.ambient_dim, Errc::DimensionMismatch,
          "prediction input has " + std::to_string(x_recent.rows()) + " rows, model expects " +
              std::to_string(model.ambient_dim));
  const Eigen::MatrixXcd coeffs = model.pseudo_inverse_P * x_recent.cast<std::complex<double>>();
  const Eigen::MatrixXcd out = model.exact_modes * (model.eig_values.asDiagonal() * coeffs);
  if (imag_residual != nullptr) {
    *imag_residual = out.size() == 0 ? 0.0 : out.imag().cwiseAbs().maxCoeff();
  }
  return out.real();
}

void save_dmd(const std::filesystem::path& path, const DmdModel& model) {
  ArchiveWriter ar;
  ar.meta() = {{"kind", "dmd"},
               {"r", model.r_dmd},
               {"requested_rank", model.requested_rank},
               {"w", model.w},
               {"l", model.l},
               {"ambient_dim", model.ambient_dim},
               {"fit_time", model.fit_time},
               {"warnings", model.warnings}};
  ar.put("eig_values", Eigen::MatrixXcd(model.eig_values));
  ar.put("P", model.exact_modes);
  ar.put("P_pinv", model.pseudo_inverse_P);
  ar.write(path);
}

DmdModel load_dmd(const std::filesystem::path& path) {
  const ArchiveReader ar(path);
  const auto& m = ar.meta();
  require(m.value("kind", std::string()) == "dmd", Errc::MalformedHeader, "not a DMD archive");
  DmdModel model;
  model.r_dmd = m.at("r").get<Index>();
  model.requested_rank = m.at("requested_rank").get<Index>();
  model.w = m.at("w").get<Index>();
  model.l = m.at("l").get<Index>();
  model.ambient_dim = m.at("ambient_dim").get<Index>();
  model.fit_time = m.value("fit_time", 0.0);
  model.warnings = m.value("warnings", std::vector<std::string>{});
  const Eigen::MatrixXcd eig = ar.complex_matrix("eig_values");
  model.eig_values = Eigen::Map<const Eigen::VectorXcd>(eig.data(), eig.size());
  model.exact_modes = ar.complex_matrix("P");
  model.pseudo_inverse_P = ar.complex_matrix("P_pinv");
  require(model.exact_modes.rows() == model.ambient_dim &&
              model.exact_modes.cols() == model.r_dmd &&
              model.eig_values.size() == model.r_dmd,
          Errc::DimensionMismatch, "DMD archive dimensions inconsistent");
  return model;
}

}  // namespace twin
