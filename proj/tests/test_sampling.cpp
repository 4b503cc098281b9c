#include "thermotwin/sampling.hpp"

#include <doctest.h>

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <numeric>
#include <random>

#include "support.hpp"
#include "thermotwin/archive.hpp"

using namespace twin;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PodBasis basis_from(const MatrixXd& modes) {
  PodBasis b;
  b.modes = modes;
  b.singular_values = VectorXd::Ones(modes.cols());
  b.right_vectors = MatrixXd::Identity(modes.cols(), modes.cols());
  b.full_rank = modes.cols();
  b.total_energy = static_cast<double>(modes.cols());
  return b;
}

double cond(const MatrixXd& A) {
  const VectorXd s = Eigen::JacobiSVD<MatrixXd>(A).singularValues();
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : 1e300;
}

}  // namespace

TEST_CASE("pivots are forced by exact sparsity") {
  MatrixXd modes = MatrixXd::Zero(9, 3);
  modes(2, 0) = 1.0;
  modes(5, 1) = 1.0;
  modes(7, 2) = 1.0;
  const MeasurementPlan plan = select_locations(basis_from(modes), 3);
  CHECK(plan.indices == std::vector<Index>{2, 5, 7});
  CHECK(plan.theta.isIdentity());
}

TEST_CASE("QR sensors beat random subsets on conditioning") {
  const MatrixXd modes = test::random_orthonormal(200, 3, 12);
  const MeasurementPlan plan = select_locations(basis_from(modes), 3);
  REQUIRE(plan.s() == 3);
  const double ours = cond(plan.theta);
  std::mt19937_64 rng(5);
  std::vector<Index> all(200);
  std::iota(all.begin(), all.end(), 0);
  int worse_or_equal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(all.begin(), all.end(), rng);
    MatrixXd theta(3, 3);
    for (int k = 0; k < 3; ++k) theta.row(k) = modes.row(all[static_cast<std::size_t>(k)]);
    if (ours <= cond(theta)) ++worse_or_equal;
  }
  CHECK(worse_or_equal >= 95);
}

TEST_CASE("sample count errors") {
  const PodBasis b = basis_from(test::random_orthonormal(10, 3, 1));
  try {
    select_locations(b, 2);
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewSamples);
  }
  try {
    select_locations(b, 11);
    FAIL("expected TooManySamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooManySamples);
  }
}

TEST_CASE("plan invariants hold on random bases and sample counts") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index r = 1 + static_cast<Index>(seed % 5);
    const Index s = r + static_cast<Index>(seed % 3);
    const PodBasis b = basis_from(test::random_orthonormal(80, r, 300 + seed));
    const MeasurementPlan plan = select_locations(b, s);
    CHECK(plan.s() == s);
    CHECK(std::is_sorted(plan.indices.begin(), plan.indices.end()));
    CHECK(std::adjacent_find(plan.indices.begin(), plan.indices.end()) == plan.indices.end());
    const MatrixXd& T = plan.theta;
    CHECK((T * plan.theta_pinv * T - T).norm() <= 1e-8 * T.norm());
  }
}

TEST_CASE("coefficients invert theta and fit least squares") {
  const PodBasis b = basis_from(test::random_orthonormal(60, 3, 2));
  const MeasurementPlan plan = select_locations(b, 3);
  const VectorXd a0 = (VectorXd(3) << 1.5, -2.0, 0.25).finished();
  CHECK((estimate_coefficients(plan, plan.theta * a0) - a0).norm() <= 1e-10);
  CHECK(estimate_coefficients(plan, VectorXd::Zero(3)).isZero());

  const MeasurementPlan over = select_locations(b, 6);
  const VectorXd y = over.theta * a0 + 0.01 * test::random_matrix(6, 1, 3);
  const VectorXd normal =
      (over.theta.transpose() * over.theta).ldlt().solve(over.theta.transpose() * y);
  CHECK((estimate_coefficients(over, y) - normal).norm() <= 1e-8);
  CHECK_THROWS_AS(estimate_coefficients(plan, VectorXd::Zero(4)), Error);
}

TEST_CASE("reconstruction is exact on the basis span and linear") {
  const PodBasis b = basis_from(test::random_orthonormal(120, 3, 4));
  const MeasurementPlan plan = select_locations(b, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const VectorXd x = b.modes * test::random_matrix(3, 1, 40 + seed);
    VectorXd y(3);
    gather(plan, x, y);
    CHECK((reconstruct(b, plan, y) - x).cwiseAbs().maxCoeff() <= 1e-8 * x.cwiseAbs().maxCoeff());
  }
  CHECK(reconstruct(b, plan, VectorXd::Zero(3)).isZero());
  const VectorXd y1 = test::random_matrix(3, 1, 8);
  const VectorXd y2 = test::random_matrix(3, 1, 9);
  const VectorXd lhs = reconstruct(b, plan, 2.0 * y1 - 0.5 * y2);
  const VectorXd rhs = 2.0 * reconstruct(b, plan, y1) - 0.5 * reconstruct(b, plan, y2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("reconstruction of training columns equals the rank-r projection") {
  const MatrixXd X = test::random_orthonormal(90, 3, 6) * test::random_matrix(3, 30, 7) +
                     0.05 * test::random_matrix(90, 30, 8);
  const PodBasis b = truncated_svd(X, 3);
  const MeasurementPlan plan = select_locations(b, 3);
  // With s = r and theta invertible, reconstruction projects onto the span
  // through the sensors; on span members it coincides with modes*modes^T x.
  for (Index j = 0; j < X.cols(); ++j) {
    const VectorXd proj = b.modes * (b.modes.transpose() * X.col(j));
    VectorXd y(3);
    gather(plan, proj, y);
    CHECK((reconstruct(b, plan, y) - proj).norm() <= 1e-8 * X.col(j).norm());
  }
}

TEST_CASE("pixel permutation permutes the chosen sensors") {
  const MatrixXd modes = test::random_orthonormal(150, 3, 10);
  std::vector<Index> perm(150);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  MatrixXd permuted(150, 3);
  for (Index i = 0; i < 150; ++i) permuted.row(i) = modes.row(perm[static_cast<std::size_t>(i)]);
  const MeasurementPlan a = select_locations(basis_from(modes), 4);
  const MeasurementPlan b = select_locations(basis_from(permuted), 4);
  std::vector<Index> mapped;
  for (Index i : b.indices) mapped.push_back(perm[static_cast<std::size_t>(i)]);
  std::sort(mapped.begin(), mapped.end());
  CHECK(mapped == a.indices);
}

TEST_CASE("centered bases add the mean back") {
  MatrixXd X = test::random_orthonormal(50, 2, 20) * test::random_matrix(2, 15, 21);
  X.colwise() += VectorXd::LinSpaced(50, 20.0, 40.0);
  SvdOptions opts;
  opts.center = true;
  const PodBasis b = truncated_svd(X, 2, opts);
  const MeasurementPlan plan = select_locations(b, 2);
  VectorXd y(2);
  gather(plan, X.col(4), y);
  VectorXd a(2);
  VectorXd out(50);
  reconstruct_into(b, plan, y, a, out);
  CHECK((out - X.col(4)).norm() <= 1e-8 * X.col(4).norm());
}

TEST_CASE("plan round-trips through an archive") {
  const PodBasis b = basis_from(test::random_orthonormal(40, 3, 30));
  const MeasurementPlan plan = select_locations(b, 4);
  ArchiveWriter w;
  save_plan(w, plan, "plan.");
  const ArchiveReader r(w.bytes());
  const MeasurementPlan back = load_plan(r, b, "plan.");
  CHECK(back.indices == plan.indices);
  CHECK(back.theta_pinv == plan.theta_pinv);
}
