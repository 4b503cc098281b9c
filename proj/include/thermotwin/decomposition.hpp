#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "thermotwin/error.hpp"

namespace twin {

using Index = Eigen::Index;

/// Truncated POD basis: X ~= modes * diag(singular_values) * right_vectors^T.
struct PodBasis {
  Eigen::MatrixXd modes;            // n x r, orthonormal columns
  Eigen::VectorXd singular_values;  // r, descending
  Eigen::MatrixXd right_vectors;    // k x r
  double total_energy = 0.0;        // ||X||_F^2 of the (possibly centered) input
  Index full_rank = 0;              // min(n, k)
  /// Row mean removed before the SVD; empty unless SvdOptions::center was set.
  Eigen::VectorXd mean;

  Index rank() const noexcept { return modes.cols(); }
  Index pixels() const noexcept { return modes.rows(); }
  bool centered() const noexcept { return mean.size() != 0; }
};

struct SvdOptions {
  bool center = false;
  /// Inputs with rows*cols at or below this go through a dense BDCSVD; larger
  /// ones use blocked subspace iteration on X X^T.
  Index direct_limit = 4'000'000;
  Index oversample = 10;
  int max_iter = 300;
  double tol = 1e-12;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

/// A read-only, column-concatenated view over several pixel matrices, so a
/// training sweep can be decomposed without first copying it into one block.
template <typename Scalar>
class ColumnBlocks {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Block = Eigen::Map<const Matrix>;

  ColumnBlocks() = default;
  explicit ColumnBlocks(const Matrix& m) { add(m); }

  void add(const Matrix& m) {
    if (!blocks_.empty()) {
      require(m.rows() == rows_, Errc::DimensionMismatch, "column blocks disagree on rows");
    }
    rows_ = m.rows();
    cols_ += m.cols();
    blocks_.emplace_back(m.data(), m.rows(), m.cols());
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }

 private:
  std::vector<Block> blocks_;
  Index rows_ = 0;
  Index cols_ = 0;
};

PodBasis truncated_svd(const ColumnBlocks<float>& X, Index r, const SvdOptions& opts = {});
PodBasis truncated_svd(const ColumnBlocks<double>& X, Index r, const SvdOptions& opts = {});

template <typename Derived>
PodBasis truncated_svd(const Eigen::MatrixBase<Derived>& X, Index r, const SvdOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Matrix dense = X;
  return truncated_svd(ColumnBlocks<Scalar>(dense), r, opts);
}

/// Fraction of total energy captured by the leading r singular values.
double pod_energy_ratio(const PodBasis& basis, Index r);

/// Thin SVD of a dense matrix, chosen for tall-skinny inputs (Gram route when
/// rows >> cols, BDCSVD otherwise). Returns U (optional), singular values and V.
struct ThinSvd {
  Eigen::MatrixXd U;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd V;
};
ThinSvd thin_svd(const Eigen::MatrixXd& Y, bool want_u = true);

// -- DMD ----------------------------------------------------------------------

/// l-step DMD operator Phi = P diag(eig_values) P^+ fitted on one window.
struct DmdModel {
  Index r_dmd = 0;            // retained rank after any auto-truncation
  Index requested_rank = 0;
  Index w = 0;
  Index l = 0;
  Index ambient_dim = 0;
  Eigen::VectorXcd eig_values;
  Eigen::MatrixXcd exact_modes;       // P, ambient_dim x r_dmd
  Eigen::MatrixXcd pseudo_inverse_P;  // P^+, r_dmd x ambient_dim
  double fit_time = 0.0;
  std::vector<std::string> warnings;

  bool rank_reduced() const noexcept { return r_dmd < requested_rank; }
};

/// Auto-truncation threshold relative to the leading singular value.
inline constexpr double kDmdSigmaFloor = 1e-12;

/// window holds x_0 ... x_{w+l}; X = [x_0..x_w], X' = [x_l..x_{w+l}].
DmdModel fit_dmd_window(const Eigen::MatrixXd& window, Index l, Index r_dmd);

template <typename Derived>
DmdModel fit_dmd(const Eigen::MatrixBase<Derived>& window, Index l, Index r_dmd) {
  return fit_dmd_window(window.template cast<double>(), l, r_dmd);
}

/// Re(P Lambda P^+ X). `imag_residual` receives max |Im| over the product.
Eigen::MatrixXd dmd_predict(const DmdModel& model, const Eigen::MatrixXd& x_recent,
                            double* imag_residual = nullptr);

void save_dmd(const std::filesystem::path& path, const DmdModel& model);
DmdModel load_dmd(const std::filesystem::path& path);

}  // namespace twin
