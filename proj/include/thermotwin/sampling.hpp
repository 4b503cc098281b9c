#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "thermotwin/decomposition.hpp"

namespace twin {

class ArchiveWriter;
class ArchiveReader;

/// Sparse measurement operator C represented by the pixels it selects.
struct MeasurementPlan {
  std::vector<Index> indices;  // ascending, distinct
  Eigen::MatrixXd theta;       // s x r, rows of the modes at `indices`
  Eigen::MatrixXd theta_pinv;  // r x s

  Index s() const noexcept { return static_cast<Index>(indices.size()); }
  Index r() const noexcept { return theta.cols(); }
};

/// Relative cutoff below which singular values of theta count as zero.
inline constexpr double kPinvCutoff = 1e-12;

/// Column-pivoted QR on modes^T; the first r pivots are the sensors. Extra
/// samples beyond r are added greedily by largest leverage against the
/// current selection.
MeasurementPlan select_locations(const PodBasis& basis, Index s);

/// Builds a plan from explicit pixel indices (sorted and checked).
MeasurementPlan plan_from_indices(const PodBasis& basis, std::vector<Index> indices);

/// Pivot order of the greedy QR on an r x n matrix, `count` pivots.
std::vector<Index> pivoted_qr_order(const Eigen::MatrixXd& A, Index count);

template <typename Derived>
void gather(const MeasurementPlan& plan, const Eigen::MatrixBase<Derived>& frame,
            Eigen::Ref<Eigen::VectorXd> y) {
  require(y.size() == plan.s(), Errc::DimensionMismatch, "sample buffer has wrong length");
  for (Index k = 0; k < plan.s(); ++k) {
    const Index i = plan.indices[static_cast<std::size_t>(k)];
    require(i < frame.size(), Errc::DimensionMismatch, "frame smaller than plan indices");
    y(k) = static_cast<double>(frame(i));
  }
}

/// a = theta^+ (y - mean at the sampled pixels); mean is empty if uncentered.
void estimate_coefficients_into(const MeasurementPlan& plan, const PodBasis& basis,
                                const Eigen::Ref<const Eigen::VectorXd>& y,
                                Eigen::Ref<Eigen::VectorXd> a);
Eigen::VectorXd estimate_coefficients(const MeasurementPlan& plan,
                                      const Eigen::Ref<const Eigen::VectorXd>& y);

/// Full frame from coefficients: modes * a (+ mean when centered).
void expand_into(const PodBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& a,
                 Eigen::Ref<Eigen::VectorXd> out);

/// x_hat = modes * theta^+ y. Allocation free when `out` is presized.
void reconstruct_into(const PodBasis& basis, const MeasurementPlan& plan,
                      const Eigen::Ref<const Eigen::VectorXd>& y,
                      Eigen::Ref<Eigen::VectorXd> a_scratch, Eigen::Ref<Eigen::VectorXd> out);
Eigen::VectorXd reconstruct(const PodBasis& basis, const MeasurementPlan& plan,
                            const Eigen::Ref<const Eigen::VectorXd>& y);

void save_plan(ArchiveWriter& ar, const MeasurementPlan& plan, const std::string& prefix);
MeasurementPlan load_plan(const ArchiveReader& ar, const PodBasis& basis, const std::string& prefix);

}  // namespace twin
