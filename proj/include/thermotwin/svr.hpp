#pragma once

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "thermotwin/error.hpp"

namespace twin {

using Index = Eigen::Index;

class ArchiveWriter;
class ArchiveReader;
struct MeasurementPlan;
struct SnapshotMatrix;

struct Kernel {
  enum class Type { Gaussian, Linear };
  Type type = Type::Gaussian;
  double gamma = 1.0;

  static Kernel gaussian(double gamma) { return {Type::Gaussian, gamma}; }
  static Kernel linear() { return {Type::Linear, 0.0}; }

  template <typename A, typename B>
  double operator()(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) const {
    if (type == Type::Linear) return a.dot(b);
    return std::exp(-gamma * (a - b).squaredNorm());
  }
};

std::string to_string(Kernel::Type t);

struct SvrProblem {
  Eigen::MatrixXd x;  // q x d
  Eigen::VectorXd y;  // q
  double c = 1.0;
  double epsilon = 0.1;
  Kernel kernel;
  /// Stop when the maximal KKT violation m - M drops to this. Predictions
  /// track the exact optimum to roughly 10 * tol.
  double tol = 1e-6;
  long max_iter = 10'000'000;
};

struct SvrModel {
  Eigen::MatrixXd support_vectors;  // nsv x d
  Eigen::VectorXd dual_coefs;       // alpha - alpha*, in [-c, c]
  double bias = 0.0;
  Kernel kernel;
  long iterations = 0;
  double kkt_gap = 0.0;  // final m - M
  std::vector<Index> sv_index;  // training rows of the support vectors (not persisted)

  Index dim() const noexcept { return support_vectors.cols(); }
};

SvrModel svr_fit(const SvrProblem& problem);

/// f(x) = sum_i coef_i K(x, sv_i) + bias.
template <typename Derived>
double svr_predict(const SvrModel& model, const Eigen::MatrixBase<Derived>& x) {
  require(x.size() == model.dim() || model.support_vectors.rows() == 0, Errc::DimensionMismatch,
          "feature dimension does not match the model");
  double f = model.bias;
  for (Index i = 0; i < model.support_vectors.rows(); ++i) {
    f += model.dual_coefs(i) * model.kernel(model.support_vectors.row(i).transpose(), x);
  }
  return f;
}

/// Largest KKT violation of the fitted model on its training data, measured
/// in the tube: points strictly inside the tube by more than `slack` must carry
/// no dual weight, points strictly outside must sit at the bound.
double svr_kkt_residual(const SvrModel& model, const SvrProblem& problem, double slack = 1e-3);

// -- imputation ---------------------------------------------------------------

struct PixelGuard {
  double train_mean = 0.0;
  double train_std = 0.0;
  double k_sigma = 5.0;

  bool accepts(double v) const noexcept {
    return std::isfinite(v) && std::abs(v - train_mean) <= k_sigma * train_std;
  }
};

/// Predicts sampled pixel `target` from the other sampled pixels. Inputs and
/// target are standardised; epsilon is rescaled so the tube keeps its width
/// in degrees.
struct Imputer {
  Index target = 0;
  std::vector<Index> inputs;     // positions within the sample vector
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;
  SvrModel model;

  template <typename Derived>
  double predict_standardised(const Eigen::MatrixBase<Derived>& z) const {
    return target_mean + target_std * svr_predict(model, z);
  }
};

struct ImputerConfig {
  double c = 1.0;
  double epsilon = 0.1;
  Kernel::Type kernel = Kernel::Type::Gaussian;
  /// Gaussian width; empty means 1 / (d * var(features)) on training data.
  std::optional<double> gamma;
  double k_sigma = 5.0;
  /// Training rows are thinned by a fixed stride down to this many.
  Index max_train = 2000;
  double tol = 1e-6;
};

struct ImputerSet {
  std::vector<Imputer> imputers;
  std::vector<PixelGuard> guards;

  Index size() const noexcept { return static_cast<Index>(guards.size()); }
};

/// One imputer and one guard per row of `samples` (s x k: sampled pixels over
/// the training snapshots).
ImputerSet build_imputers(const Eigen::MatrixXd& samples, const ImputerConfig& cfg = {});
ImputerSet build_imputers(const Eigen::MatrixXf& training, const MeasurementPlan& plan,
                          const ImputerConfig& cfg = {});

/// Scratch space so the per-frame path does not allocate.
struct ImputeScratch {
  Eigen::VectorXd features;
};

/// Replaces out-of-guard samples in place with their imputed values. Returns
/// the number replaced and writes their positions into `flags` (cleared first,
/// capacity reused). Throws SensorFault when s-1 or more samples are flagged.
Index impute_if_erroneous(Eigen::Ref<Eigen::VectorXd> y, const ImputerSet& set,
                          std::vector<Index>& flags, ImputeScratch& scratch);

void save_imputers(ArchiveWriter& ar, const ImputerSet& set, const std::string& prefix);
ImputerSet load_imputers(const ArchiveReader& ar, const std::string& prefix);

}  // namespace twin
