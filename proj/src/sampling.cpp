#include "thermotwin/sampling.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>

#include "thermotwin/archive.hpp"

namespace twin {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd pseudo_inverse(const MatrixXd& theta) {
  Eigen::JacobiSVD<MatrixXd> svd(theta, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  VectorXd inv = VectorXd::Zero(s.size());
  if (s.size() > 0 && s(0) > 0.0) {
    for (Index i = 0; i < s.size(); ++i) {
      if (s(i) > kPinvCutoff * s(0)) inv(i) = 1.0 / s(i);
    }
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

std::vector<Index> pivoted_qr_order(const MatrixXd& A, Index count) {
  // Modified Gram-Schmidt with column norms recomputed exactly after each
  // deflation; strict comparison keeps the lowest index on ties.
  MatrixXd R = A;
  std::vector<Index> order;
  std::vector<bool> used(static_cast<std::size_t>(A.cols()), false);
  const Index steps = std::min({count, A.rows(), A.cols()});
  for (Index step = 0; step < steps; ++step) {
    Index best = -1;
    double best_norm = -1.0;
    for (Index j = 0; j < R.cols(); ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double nj = R.col(j).squaredNorm();
      if (nj > best_norm) {
        best_norm = nj;
        best = j;
      }
    }
    if (best < 0 || best_norm <= 0.0) break;
    used[static_cast<std::size_t>(best)] = true;
    order.push_back(best);
    const VectorXd q = R.col(best) / std::sqrt(best_norm);
    R -= q * (q.transpose() * R);
  }
  return order;
}

MeasurementPlan plan_from_indices(const PodBasis& basis, std::vector<Index> indices) {
  std::sort(indices.begin(), indices.end());
  require(std::adjacent_find(indices.begin(), indices.end()) == indices.end(), Errc::BadConfig,
          "sensor indices must be distinct");
  require(static_cast<Index>(indices.size()) >= basis.rank(), Errc::TooFewSamples,
          "fewer sensors than modes");
  MeasurementPlan plan;
  plan.indices = std::move(indices);
  plan.theta.resize(plan.s(), basis.rank());
  for (Index k = 0; k < plan.s(); ++k) {
    const Index i = plan.indices[static_cast<std::size_t>(k)];
    require(i >= 0 && i < basis.pixels(), Errc::IndexOutOfRange, "sensor index outside frame");
    plan.theta.row(k) = basis.modes.row(i);
  }
  plan.theta_pinv = pseudo_inverse(plan.theta);
  return plan;
}

MeasurementPlan select_locations(const PodBasis& basis, Index s) {
  const Index r = basis.rank();
  const Index n = basis.pixels();
  require(s >= r, Errc::TooFewSamples,
          "s=" + std::to_string(s) + " is below the rank r=" + std::to_string(r));
  require(s <= n, Errc::TooManySamples,
          "s=" + std::to_string(s) + " exceeds the pixel count " + std::to_string(n));

  const MatrixXd At = basis.modes.transpose();
  std::vector<Index> chosen = pivoted_qr_order(At, r);
  require(static_cast<Index>(chosen.size()) == r, Errc::SvdFailure,
          "modes are rank deficient; pivoted QR found fewer than r pivots");

  // The QR residual is exactly zero after r pivots, so oversampling picks the
  // pixel whose mode row is worst explained by the current selection.
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Index i : chosen) used[static_cast<std::size_t>(i)] = true;
  while (static_cast<Index>(chosen.size()) < s) {
    MatrixXd theta(static_cast<Index>(chosen.size()), r);
    for (Index k = 0; k < theta.rows(); ++k) {
      theta.row(k) = basis.modes.row(chosen[static_cast<std::size_t>(k)]);
    }
    const MatrixXd info_inv = (theta.transpose() * theta).inverse();
    Index best = -1;
    double best_lev = -1.0;
    for (Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const auto row = basis.modes.row(i);
      const double lev = row * info_inv * row.transpose();
      if (lev > best_lev) {
        best_lev = lev;
        best = i;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    chosen.push_back(best);
  }
  return plan_from_indices(basis, std::move(chosen));
}

void estimate_coefficients_into(const MeasurementPlan& plan, const PodBasis& basis,
                                const Eigen::Ref<const VectorXd>& y, Eigen::Ref<VectorXd> a) {
  if (y.size() != plan.s()) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(plan.s()) + " samples, got " +
                                             std::to_string(y.size()));
  }
  require(a.size() == plan.r(), Errc::DimensionMismatch, "coefficient buffer has wrong length");
  if (!basis.centered()) {
    a.noalias() = plan.theta_pinv * y;
    return;
  }
  a.setZero();
  for (Index k = 0; k < plan.s(); ++k) {
    const double centred = y(k) - basis.mean(plan.indices[static_cast<std::size_t>(k)]);
    a += plan.theta_pinv.col(k) * centred;
  }
}

VectorXd estimate_coefficients(const MeasurementPlan& plan, const Eigen::Ref<const VectorXd>& y) {
  require(y.size() == plan.s(), Errc::DimensionMismatch,
          "expected " + std::to_string(plan.s()) + " samples, got " + std::to_string(y.size()));
  require(y.allFinite(), Errc::NonFiniteInput, "samples must be finite");
  return plan.theta_pinv * y;
}

void expand_into(const PodBasis& basis, const Eigen::Ref<const VectorXd>& a,
                 Eigen::Ref<VectorXd> out) {
  require(out.size() == basis.pixels() && a.size() == basis.rank(), Errc::DimensionMismatch,
          "expansion buffers do not match the basis");
  out.noalias() = basis.modes * a;
  if (basis.centered()) out += basis.mean;
}

void reconstruct_into(const PodBasis& basis, const MeasurementPlan& plan,
                      const Eigen::Ref<const VectorXd>& y, Eigen::Ref<VectorXd> a_scratch,
                      Eigen::Ref<VectorXd> out) {
  estimate_coefficients_into(plan, basis, y, a_scratch);
  expand_into(basis, a_scratch, out);
}

VectorXd reconstruct(const PodBasis& basis, const MeasurementPlan& plan,
                     const Eigen::Ref<const VectorXd>& y) {
  require(y.allFinite(), Errc::NonFiniteInput, "samples must be finite");
  VectorXd a(plan.r());
  VectorXd out(basis.pixels());
  reconstruct_into(basis, plan, y, a, out);
  return out;
}

void save_plan(ArchiveWriter& ar, const MeasurementPlan& plan, const std::string& prefix) {
  std::vector<std::uint32_t> idx;
  idx.reserve(plan.indices.size());
  for (Index i : plan.indices) idx.push_back(static_cast<std::uint32_t>(i));
  ar.put_u32(prefix + "indices", idx);
  ar.put(prefix + "theta_pinv", plan.theta_pinv);
}

MeasurementPlan load_plan(const ArchiveReader& ar, const PodBasis& basis,
                          const std::string& prefix) {
  std::vector<Index> idx;
  for (std::uint32_t i : ar.u32(prefix + "indices")) idx.push_back(static_cast<Index>(i));
  MeasurementPlan plan = plan_from_indices(basis, std::move(idx));
  // Keep the stored pseudo-inverse so a reloaded model is bit-identical.
  const MatrixXd stored = ar.matrix(prefix + "theta_pinv");
  require(stored.rows() == plan.theta_pinv.rows() && stored.cols() == plan.theta_pinv.cols(),
          Errc::DimensionMismatch, "stored pseudo-inverse has wrong shape");
  plan.theta_pinv = stored;
  return plan;
}

}  // namespace twin
