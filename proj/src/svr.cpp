#include "thermotwin/svr.hpp"

#include <algorithm>
#include <limits>

#include "thermotwin/archive.hpp"
#include "thermotwin/sampling.hpp"

namespace twin {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Kernel::Type t) {
  return t == Kernel::Type::Linear ? "linear" : "gaussian";
}

namespace {

constexpr double kTau = 1e-12;

MatrixXd kernel_matrix(const MatrixXd& x, const Kernel& k) {
  const Index q = x.rows();
  MatrixXd K(q, q);
  if (k.type == Kernel::Type::Linear) {
    K.noalias() = x * x.transpose();
    return K;
  }
  const VectorXd sq = x.rowwise().squaredNorm();
  K.noalias() = x * x.transpose();
  for (Index j = 0; j < q; ++j) {
    for (Index i = 0; i < q; ++i) {
      const double d2 = std::max(sq(i) + sq(j) - 2.0 * K(i, j), 0.0);
      K(i, j) = std::exp(-k.gamma * d2);
    }
  }
  return K;
}

}  // namespace

SvrModel svr_fit(const SvrProblem& pb) {
  const Index q = pb.x.rows();
  require(q >= 1 && pb.y.size() == q, Errc::NoData, "SVR needs at least one training row");
  require(pb.x.cols() >= 1, Errc::NoData, "SVR needs at least one feature");
  require(pb.c > 0.0 && pb.epsilon >= 0.0 && pb.tol > 0.0, Errc::BadConfig,
          "SVR needs c > 0, epsilon >= 0, tol > 0");
  require(pb.x.allFinite() && pb.y.allFinite(), Errc::NonFiniteInput, "SVR inputs not finite");

  const MatrixXd K = kernel_matrix(pb.x, pb.kernel);
  require(K.allFinite(), Errc::DegenerateKernel, "kernel matrix is not finite");

  // Variables 0..q-1 are alpha (sign +1), q..2q-1 are alpha* (sign -1):
  // minimise 1/2 b^T Q b + p^T b, 0 <= b <= c, sum sign_t b_t = 0.
  const Index l = 2 * q;
  const double C = pb.c;
  auto sign = [q](Index t) { return t < q ? 1.0 : -1.0; };
  auto row = [q](Index t) { return t < q ? t : t - q; };
  auto Qv = [&](Index a, Index b) { return sign(a) * sign(b) * K(row(a), row(b)); };

  VectorXd alpha = VectorXd::Zero(l);
  VectorXd G(l);
  for (Index i = 0; i < q; ++i) {
    G(i) = pb.epsilon - pb.y(i);
    G(i + q) = pb.epsilon + pb.y(i);
  }

  auto is_upper = [&](Index t) { return alpha(t) >= C; };
  auto is_lower = [&](Index t) { return alpha(t) <= 0.0; };

  SvrModel model;
  model.kernel = pb.kernel;
  long it = 0;
  double gap = 0.0;
  for (; it < pb.max_iter; ++it) {
    // Maximal violating pair.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    Index i = -1;
    Index j = -1;
    for (Index t = 0; t < l; ++t) {
      const double yt = sign(t);
      const double v = -yt * G(t);
      const bool up = yt > 0 ? !is_upper(t) : !is_lower(t);
      const bool low = yt > 0 ? !is_lower(t) : !is_upper(t);
      if (up && v > gmax) {
        gmax = v;
        i = t;
      }
      if (low && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    gap = gmax - gmin;
    if (i < 0 || j < 0 || gap <= pb.tol) break;

    const double yi = sign(i);
    const double yj = sign(j);
    const double Qii = K(row(i), row(i));
    const double Qjj = K(row(j), row(j));
    const double Qij = Qv(i, j);
    const double old_i = alpha(i);
    const double old_j = alpha(j);
    double ai = old_i;
    double aj = old_j;
    if (yi != yj) {
      double quad = Qii + Qjj + 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > C) {
          ai = C;
          aj = C - diff;
        }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      double quad = Qii + Qjj - 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (G(i) - G(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) {
          ai = C;
          aj = sum - C;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > C) {
        if (aj > C) {
          aj = C;
          ai = sum - C;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    alpha(i) = ai;
    alpha(j) = aj;
    const double di = ai - old_i;
    const double dj = aj - old_j;
    const Index ri = row(i);
    const Index rj = row(j);
    for (Index r = 0; r < q; ++r) {
      // Q(t, i) = sign_t sign_i K(row t, row i); rows r and r+q differ in sign.
      const double contrib = yi * K(r, ri) * di + yj * K(r, rj) * dj;
      G(r) += contrib;
      G(r + q) -= contrib;
    }
  }
  model.iterations = it;
  model.kkt_gap = gap;

  // Bias from free variables, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  Index n_free = 0;
  for (Index t = 0; t < l; ++t) {
    const double yt = sign(t);
    const double yG = yt * G(t);
    if (is_upper(t)) {
      if (yt < 0) ub = std::min(ub, yG); else lb = std::max(lb, yG);
    } else if (is_lower(t)) {
      if (yt > 0) ub = std::min(ub, yG); else lb = std::max(lb, yG);
    } else {
      ++n_free;
      free_sum += yG;
    }
  }
  const double rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : 0.5 * (ub + lb);
  model.bias = -rho;

  std::vector<Index> sv;
  for (Index r = 0; r < q; ++r) {
    if (alpha(r) - alpha(r + q) != 0.0) sv.push_back(r);
  }
  model.support_vectors.resize(static_cast<Index>(sv.size()), pb.x.cols());
  model.dual_coefs.resize(static_cast<Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    model.support_vectors.row(static_cast<Index>(k)) = pb.x.row(sv[k]);
    model.dual_coefs(static_cast<Index>(k)) = alpha(sv[k]) - alpha(sv[k] + q);
  }
  model.sv_index = std::move(sv);
  return model;
}

double svr_kkt_residual(const SvrModel& model, const SvrProblem& pb, double slack) {
  VectorXd coef = VectorXd::Zero(pb.x.rows());
  for (std::size_t k = 0; k < model.sv_index.size(); ++k) {
    coef(model.sv_index[k]) = model.dual_coefs(static_cast<Index>(k));
  }
  double worst = 0.0;
  for (Index i = 0; i < pb.x.rows(); ++i) {
    const double e = std::abs(svr_predict(model, pb.x.row(i).transpose()) - pb.y(i));
    const double a = std::abs(coef(i));
    if (a > 0.0) worst = std::max(worst, pb.epsilon - slack - e);  // weighted but inside the tube
    if (a < pb.c) worst = std::max(worst, e - pb.epsilon - slack);  // outside the tube but not at bound
    worst = std::max(worst, a - pb.c);
  }
  return std::max(worst, 0.0);
}

// -- imputation ---------------------------------------------------------------

ImputerSet build_imputers(const MatrixXd& samples, const ImputerConfig& cfg) {
  const Index s = samples.rows();
  const Index k = samples.cols();
  require(s >= 2, Errc::TooFewSamples, "imputation needs at least two sampled pixels");
  require(k >= 1, Errc::NoData, "imputation needs training snapshots");
  require(samples.allFinite(), Errc::NonFiniteInput, "training samples not finite");

  ImputerSet set;
  for (Index p = 0; p < s; ++p) {
    const double mean = samples.row(p).mean();
    const double var = (samples.row(p).array() - mean).square().mean();
    set.guards.push_back({mean, std::sqrt(var), cfg.k_sigma});
  }

  const Index stride = std::max<Index>(1, (k + cfg.max_train - 1) / cfg.max_train);
  std::vector<Index> cols;
  for (Index j = 0; j < k; j += stride) cols.push_back(j);
  const Index q = static_cast<Index>(cols.size());

  for (Index p = 0; p < s; ++p) {
    Imputer imp;
    imp.target = p;
    for (Index o = 0; o < s; ++o) {
      if (o != p) imp.inputs.push_back(o);
    }
    const Index d = static_cast<Index>(imp.inputs.size());
    imp.feature_mean.resize(d);
    imp.feature_std.resize(d);
    for (Index f = 0; f < d; ++f) {
      imp.feature_mean(f) = set.guards[static_cast<std::size_t>(imp.inputs[static_cast<std::size_t>(f)])].train_mean;
      const double sd = set.guards[static_cast<std::size_t>(imp.inputs[static_cast<std::size_t>(f)])].train_std;
      imp.feature_std(f) = sd > 0.0 ? sd : 1.0;
    }
    imp.target_mean = set.guards[static_cast<std::size_t>(p)].train_mean;
    const double target_sd = set.guards[static_cast<std::size_t>(p)].train_std;
    imp.target_std = target_sd > 0.0 ? target_sd : 1.0;
    SvrProblem pb;
    pb.x.resize(q, d);
    pb.y.resize(q);
    for (Index r = 0; r < q; ++r) {
      const Index j = cols[static_cast<std::size_t>(r)];
      for (Index f = 0; f < d; ++f) {
        pb.x(r, f) = (samples(imp.inputs[static_cast<std::size_t>(f)], j) - imp.feature_mean(f)) /
                     imp.feature_std(f);
      }
      pb.y(r) = (samples(p, j) - imp.target_mean) / imp.target_std;
    }
    pb.c = cfg.c;
    pb.epsilon = cfg.epsilon / imp.target_std;
    pb.tol = cfg.tol;
    if (cfg.kernel == Kernel::Type::Linear) {
      pb.kernel = Kernel::linear();
    } else {
      double gamma = 0.0;
      if (cfg.gamma) {
        gamma = *cfg.gamma;
      } else {
        const double var = (pb.x.array() - pb.x.mean()).square().mean();
        gamma = 1.0 / (static_cast<double>(d) * (var > 0.0 ? var : 1.0));
      }
      pb.kernel = Kernel::gaussian(gamma);
    }
    imp.model = svr_fit(pb);
    set.imputers.push_back(std::move(imp));
  }
  return set;
}

ImputerSet build_imputers(const Eigen::MatrixXf& training, const MeasurementPlan& plan,
                          const ImputerConfig& cfg) {
  MatrixXd samples(plan.s(), training.cols());
  for (Index p = 0; p < plan.s(); ++p) {
    const Index i = plan.indices[static_cast<std::size_t>(p)];
    require(i < training.rows(), Errc::DimensionMismatch, "plan index outside training frames");
    samples.row(p) = training.row(i).cast<double>();
  }
  return build_imputers(samples, cfg);
}

Index impute_if_erroneous(Eigen::Ref<VectorXd> y, const ImputerSet& set, std::vector<Index>& flags,
                          ImputeScratch& scratch) {
  const Index s = set.size();
  require(y.size() == s, Errc::DimensionMismatch, "sample vector does not match imputers");
  flags.clear();
  for (Index p = 0; p < s; ++p) {
    if (!set.guards[static_cast<std::size_t>(p)].accepts(y(p))) flags.push_back(p);
  }
  if (flags.empty()) return 0;
  if (static_cast<Index>(flags.size()) >= s - 1) {
    throw Error(Errc::SensorFault, std::to_string(flags.size()) + " of " + std::to_string(s) +
                                       " sampled pixels are outside their guard bands");
  }
  // Flagged values first become their training mean so no imputer ever reads
  // a rejected measurement, then each is predicted in index order.
  for (Index p : flags) y(p) = set.guards[static_cast<std::size_t>(p)].train_mean;
  for (Index p : flags) {
    const Imputer& imp = set.imputers[static_cast<std::size_t>(p)];
    const Index d = static_cast<Index>(imp.inputs.size());
    if (scratch.features.size() != d) scratch.features.resize(d);
    for (Index f = 0; f < d; ++f) {
      scratch.features(f) =
          (y(imp.inputs[static_cast<std::size_t>(f)]) - imp.feature_mean(f)) / imp.feature_std(f);
    }
    y(p) = imp.predict_standardised(scratch.features);
  }
  return static_cast<Index>(flags.size());
}

void save_imputers(ArchiveWriter& ar, const ImputerSet& set, const std::string& prefix) {
  nlohmann::json meta = nlohmann::json::array();
  for (std::size_t p = 0; p < set.imputers.size(); ++p) {
    const Imputer& imp = set.imputers[p];
    const PixelGuard& g = set.guards[p];
    const std::string key = prefix + std::to_string(p) + ".";
    meta.push_back({{"target", imp.target},
                    {"inputs", imp.inputs},
                    {"bias", imp.model.bias},
                    {"target_mean", imp.target_mean},
                    {"target_std", imp.target_std},
                    {"kernel", to_string(imp.model.kernel.type)},
                    {"gamma", imp.model.kernel.gamma},
                    {"guard_mean", g.train_mean},
                    {"guard_std", g.train_std},
                    {"k_sigma", g.k_sigma}});
    ar.put(key + "sv", imp.model.support_vectors);
    ar.put(key + "coef", MatrixXd(imp.model.dual_coefs));
    ar.put(key + "feature_mean", MatrixXd(imp.feature_mean));
    ar.put(key + "feature_std", MatrixXd(imp.feature_std));
  }
  ar.meta()[prefix + "imputers"] = meta;
}

ImputerSet load_imputers(const ArchiveReader& ar, const std::string& prefix) {
  ImputerSet set;
  const auto& meta = ar.meta().at(prefix + "imputers");
  for (std::size_t p = 0; p < meta.size(); ++p) {
    const auto& m = meta[p];
    const std::string key = prefix + std::to_string(p) + ".";
    Imputer imp;
    imp.target = m.at("target").get<Index>();
    imp.inputs = m.at("inputs").get<std::vector<Index>>();
    imp.model.bias = m.at("bias").get<double>();
    imp.target_mean = m.at("target_mean").get<double>();
    imp.target_std = m.at("target_std").get<double>();
    imp.model.kernel = m.at("kernel").get<std::string>() == "linear"
                           ? Kernel::linear()
                           : Kernel::gaussian(m.at("gamma").get<double>());
    imp.model.support_vectors = ar.matrix(key + "sv");
    imp.model.dual_coefs = ar.vector(key + "coef");
    imp.feature_mean = ar.vector(key + "feature_mean");
    imp.feature_std = ar.vector(key + "feature_std");
    require(imp.model.dual_coefs.size() == imp.model.support_vectors.rows() &&
                imp.feature_mean.size() == static_cast<Index>(imp.inputs.size()),
            Errc::DimensionMismatch, "imputer archive inconsistent");
    set.guards.push_back(
        {m.at("guard_mean").get<double>(), m.at("guard_std").get<double>(), m.at("k_sigma").get<double>()});
    set.imputers.push_back(std::move(imp));
  }
  return set;
}

}  // namespace twin
