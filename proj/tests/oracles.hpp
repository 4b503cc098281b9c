#pragma once

// Independent oracles and seeded problem generators shared by the unit suites
// and the acceptance runner.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "support.hpp"
#include "thermotwin/decomposition.hpp"
#include "thermotwin/svr.hpp"

namespace twin::test {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Reference dual solver: FISTA with adaptive restart on the 2q-variable
// epsilon-SVR dual, projected onto {0 <= b <= c, sum s_t b_t = 0} exactly by
// bisection on the hyperplane multiplier.
struct Reference {
  VectorXd coef;  // alpha - alpha*
  double bias = 0.0;
  Kernel kernel;
  MatrixXd x;

  double operator()(const VectorXd& z) const {
    double f = bias;
    for (Eigen::Index i = 0; i < x.rows(); ++i) f += coef(i) * kernel(x.row(i).transpose(), z);
    return f;
  }
};

inline VectorXd project(const VectorXd& v, double c, Eigen::Index q) {
  auto at = [&](double nu) {
    VectorXd b(v.size());
    for (Eigen::Index t = 0; t < v.size(); ++t) {
      const double s = t < q ? 1.0 : -1.0;
      b(t) = std::clamp(v(t) - nu * s, 0.0, c);
    }
    return b;
  };
  auto h = [&](const VectorXd& b) { return b.head(q).sum() - b.tail(q).sum(); };
  double lo = -(v.cwiseAbs().maxCoeff() + c) - 1.0;
  double hi = -lo;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (h(at(mid)) > 0.0) lo = mid; else hi = mid;
  }
  return at(0.5 * (lo + hi));
}

inline Reference reference_fit(const SvrProblem& pb) {
  const Eigen::Index q = pb.x.rows();
  MatrixXd K(q, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) K(i, j) = pb.kernel(pb.x.row(i).transpose(), pb.x.row(j).transpose());
  }
  VectorXd p(2 * q);
  p << (pb.epsilon - pb.y.array()).matrix(), (pb.epsilon + pb.y.array()).matrix();
  auto grad = [&](const VectorXd& b) {
    const VectorXd u = K * (b.head(q) - b.tail(q));
    VectorXd g(2 * q);
    g << u, -u;
    return VectorXd(g + p);
  };
  auto obj = [&](const VectorXd& b) {
    const VectorXd a = b.head(q) - b.tail(q);
    return 0.5 * a.dot(K * a) + p.dot(b);
  };
  const double L = 2.0 * Eigen::SelfAdjointEigenSolver<MatrixXd>(K).eigenvalues().maxCoeff() + 1e-12;
  VectorXd b = VectorXd::Zero(2 * q);
  VectorXd z = b;
  double t = 1.0;
  double f_prev = obj(b);
  for (int it = 0; it < 400000; ++it) {
    const VectorXd next = project(z - grad(z) / L, pb.c, q);
    const double f = obj(next);
    if (f > f_prev) {  // restart momentum
      t = 1.0;
      z = b;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * (next - b);
    const double step = (next - b).norm();
    b = next;
    t = t_next;
    f_prev = f;
    if (step < 1e-13) break;
  }

  Reference ref;
  ref.kernel = pb.kernel;
  ref.x = pb.x;
  ref.coef = b.head(q) - b.tail(q);
  const VectorXd f0 = K * ref.coef;
  const double edge = 1e-7 * pb.c;
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < q; ++i) {
    if (b(i) > edge && b(i) < pb.c - edge) {
      sum += pb.y(i) - f0(i) - pb.epsilon;
      ++count;
    }
    if (b(i + q) > edge && b(i + q) < pb.c - edge) {
      sum += pb.y(i) - f0(i) + pb.epsilon;
      ++count;
    }
  }
  if (count == 0) throw std::runtime_error("reference fit has no free support vector");
  ref.bias = sum / count;
  return ref;
}

inline SvrProblem sine_problem() {
  SvrProblem pb;
  pb.x = VectorXd::LinSpaced(20, 0.0, M_PI);
  pb.y = pb.x.col(0).array().sin().matrix();
  pb.kernel = Kernel::gaussian(1.0);
  return pb;
}

inline SvrProblem linear_problem() {
  SvrProblem pb;
  pb.x = random_matrix(30, 2, 50);
  std::mt19937_64 rng(51);
  std::normal_distribution<double> noise(0.0, 0.2);
  pb.y.resize(30);
  for (Eigen::Index i = 0; i < 30; ++i) pb.y(i) = 0.5 * pb.x(i, 0) - 0.3 * pb.x(i, 1) + noise(rng);
  pb.kernel = Kernel::linear();
  return pb;
}

inline SvrProblem bump_problem() {
  SvrProblem pb;
  std::mt19937_64 rng(60);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  pb.x.resize(40, 2);
  pb.y.resize(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    pb.x(i, 0) = u(rng);
    pb.x(i, 1) = u(rng);
    pb.y(i) = 3.0 * std::exp(-pb.x.row(i).squaredNorm()) + std::cos(pb.x(i, 0)) + noise(rng);
  }
  pb.kernel = Kernel::gaussian(0.5);
  pb.c = 5.0;
  pb.epsilon = 0.05;
  return pb;
}

inline MatrixXd grid(Eigen::Index d, double lo, double hi) {
  if (d == 1) return VectorXd::LinSpaced(57, lo, hi);
  MatrixXd g(25 * 25, 2);
  const VectorXd a = VectorXd::LinSpaced(25, lo, hi);
  for (Eigen::Index i = 0; i < 25; ++i) {
    for (Eigen::Index j = 0; j < 25; ++j) g.row(i * 25 + j) << a(i), a(j);
  }
  return g;
}

// Three collinear pixels: p1 = 2 p0 + 1, p2 = 30 - p0, p0 sweeping 20..60.
inline MatrixXd collinear_samples(Eigen::Index k = 300) {
  MatrixXd s(3, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double p0 = 20.0 + 40.0 * static_cast<double>(j) / static_cast<double>(k - 1);
    s.col(j) << p0, 2.0 * p0 + 1.0, 30.0 - p0;
  }
  return s;
}

struct Planted {
  MatrixXd L0;
  MatrixXd S0;
};

inline Planted planted(std::uint64_t seed) {
  Planted p;
  p.L0 = random_matrix(100, 2, seed) * random_matrix(50, 2, seed + 1000).transpose() /
         std::sqrt(2.0);
  p.S0 = MatrixXd::Zero(100, 50);
  std::mt19937_64 rng(seed + 2000);
  std::uniform_int_distribution<Eigen::Index> pick(0, p.S0.size() - 1);
  int placed = 0;
  while (placed < 50) {  // 1% of 5000 entries
    const Eigen::Index at = pick(rng);
    if (p.S0(at) != 0.0) continue;
    p.S0(at) = (rng() & 1U) != 0 ? 10.0 : -10.0;
    ++placed;
  }
  return p;
}

inline PodBasis basis_from(const MatrixXd& modes) {
  PodBasis b;
  b.modes = modes;
  b.singular_values = VectorXd::Ones(modes.cols());
  b.right_vectors = MatrixXd::Identity(modes.cols(), modes.cols());
  b.full_rank = modes.cols();
  b.total_energy = static_cast<double>(modes.cols());
  return b;
}

inline MatrixXd stable_map(Index r, double radius, std::uint64_t seed) {
  MatrixXd A = random_matrix(r, r, seed);
  const double rho = Eigen::EigenSolver<MatrixXd>(A).eigenvalues().cwiseAbs().maxCoeff();
  return A * (radius / rho);
}

inline MatrixXd power(const MatrixXd& A, int k) {
  MatrixXd P = MatrixXd::Identity(A.rows(), A.cols());
  for (int i = 0; i < k; ++i) P = A * P;
  return P;
}

inline bool bitwise_equal(const VectorXd& a, const VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace twin::test
