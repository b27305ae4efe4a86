#include "dynpred/superlearner.hpp"

#include <algorithm>
#include <functional>

#include <Eigen/Eigenvalues>

#include "dynpred/error.hpp"
#include "dynpred/metrics.hpp"

namespace dynpred {

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index m = v.size();
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cumsum += u[static_cast<std::size_t>(k)];
    const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
  }
  Eigen::VectorXd w = (v.array() - theta).max(0.0);
  const double s = w.sum();
  if (s > 0.0) w /= s;
  return w;
}

SuperLearnerWeights superlearner_weights(const Eigen::MatrixXd& predictions, std::span<const double> times,
                                         std::span<const int> events, double t_hor,
                                         std::vector<std::string> methods) {
  const Eigen::Index m = predictions.cols();
  const Eigen::Index n = predictions.rows();
  if (m == 0) throw ConfigError("superlearner needs at least one method");
  if (static_cast<std::size_t>(n) != times.size() || times.size() != events.size())
    throw std::invalid_argument("superlearner_weights: prediction rows, times and events differ in length");
  if (n == 0) throw DataError("superlearner: no subjects");

  const auto w = ipcw_weights(times, events, t_hor, km_censoring(times, events));
  Eigen::VectorXd wt(n), d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    wt[i] = w.status[k] < 0 ? 0.0 : w.weight[k];
    d[i] = w.status[k] == 1 ? 1.0 : 0.0;
  }
  // Brier(omega) = omega'Q omega - 2 c'omega + r
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd q = predictions.transpose() * wt.asDiagonal() * predictions * inv_n;
  const Eigen::VectorXd c = predictions.transpose() * wt.cwiseProduct(d) * inv_n;
  const double r = wt.dot(d.cwiseAbs2()) * inv_n;
  auto objective = [&](const Eigen::VectorXd& om) { return om.dot(q * om) - 2.0 * c.dot(om) + r; };

  SuperLearnerWeights out;
  out.methods = std::move(methods);
  if (out.methods.empty())
    for (Eigen::Index k = 0; k < m; ++k) out.methods.push_back("m" + std::to_string(k + 1));

  Eigen::VectorXd om = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  double f = objective(om);
  const double lip = std::max(2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff(), 1e-12);
  int it = 0;
  for (; it < 100000 && m > 1; ++it) {
    const Eigen::VectorXd g = 2.0 * (q * om - c);
    const Eigen::VectorXd dir = project_to_simplex(om - g / lip) - om;
    const double curv = dir.dot(q * dir);
    const double slope = g.dot(dir);
    if (!(slope < 0.0)) break;
    const double t = curv > 0.0 ? std::min(1.0, -slope / (2.0 * curv)) : 1.0;
    const Eigen::VectorXd next = project_to_simplex(om + t * dir);
    const double fn = objective(next);
    if (!(fn < f)) break;
    const double decrease = f - fn;
    om = next;
    f = fn;
    if (decrease < 1e-12) break;
  }
  // Every vertex is feasible; never return something worse than the best one.
  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e[k] = 1.0;
    const double fv = objective(e);
    if (fv < f - 1e-15) {
      f = fv;
      om = e;
    }
  }
  out.omega = om;
  out.objective = f;
  out.iterations = it;
  return out;
}

std::vector<double> superlearner_predict(const SuperLearnerWeights& weights, const Eigen::MatrixXd& predictions) {
  if (predictions.cols() != weights.omega.size())
    throw DataError("superlearner_predict: prediction matrix has " + std::to_string(predictions.cols()) +
                    " methods, weights have " + std::to_string(weights.omega.size()));
  const Eigen::VectorXd p = predictions * weights.omega;
  std::vector<double> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = std::clamp(p[i], 0.0, 1.0);
  return out;
}

}  // namespace dynpred
