#include "dynpred/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace dynpred {

namespace {

struct Box {
  const Eigen::VectorXd& lo;
  const Eigen::VectorXd& hi;

  Eigen::VectorXd project(Eigen::VectorXd x) const {
    if (lo.size() == x.size()) x = x.cwiseMax(lo);
    if (hi.size() == x.size()) x = x.cwiseMin(hi);
    return x;
  }
  bool at_lower(const Eigen::VectorXd& x, Eigen::Index i) const { return lo.size() == x.size() && x[i] <= lo[i]; }
  bool at_upper(const Eigen::VectorXd& x, Eigen::Index i) const { return hi.size() == x.size() && x[i] >= hi[i]; }

  // Zero the gradient along coordinates held at an active bound.
  Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if ((at_lower(x, i) && g[i] > 0.0) || (at_upper(x, i) && g[i] < 0.0)) pg[i] = 0.0;
    return pg;
  }
};

}  // namespace

OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& options) {
  const Box box{options.lower, options.upper};
  const Eigen::Index n = x0.size();
  OptimResult r;
  r.x = box.project(std::move(x0));
  r.gradient.resize(n);
  r.value = f(r.x, &r.gradient);
  if (!std::isfinite(r.value)) throw NumericalError("objective is not finite at the starting point");

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd pg = box.projected_gradient(r.x, r.gradient);
  r.gradient_norm = n ? pg.cwiseAbs().maxCoeff() : 0.0;
  if (r.gradient_norm < options.gradient_tolerance) {
    r.converged = true;
    return r;
  }

  bool fresh_hessian = true;
  for (r.iterations = 1; r.iterations <= options.max_iterations; ++r.iterations) {
    Eigen::VectorXd d = -(h * pg);
    for (Eigen::Index i = 0; i < n; ++i)
      if (pg[i] == 0.0 && (box.at_lower(r.x, i) || box.at_upper(r.x, i))) d[i] = 0.0;
    double slope = d.dot(r.gradient);
    if (!(slope < 0.0)) {
      h.setIdentity();
      d = -pg;
      slope = d.dot(r.gradient);
      fresh_hessian = true;
    }
    if (fresh_hessian) {
      // Scale the first steepest-descent step to a unit move.
      const double dn = d.cwiseAbs().maxCoeff();
      if (dn > 1.0) {
        d /= dn;
        slope /= dn;
      }
    }

    double step = 1.0;
    Eigen::VectorXd x_new, g_new(n);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false, any_finite = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = box.project(r.x + step * d);
      f_new = f(x_new, &g_new);
      any_finite = any_finite || std::isfinite(f_new);
      const double decrease = (x_new - r.x).dot(r.gradient);
      if (std::isfinite(f_new) && f_new <= r.value + 1e-4 * std::min(decrease, 0.0)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }

    if (!accepted || !(f_new < r.value)) {
      if (!fresh_hessian) {
        h.setIdentity();
        fresh_hessian = true;
        continue;
      }
      // Even steepest descent cannot lower f at working precision: f is
      // stationary. Badly scaled directions may still show a sizeable gradient.
      r.converged = any_finite || r.gradient_norm < options.gradient_tolerance;
      return r;
    }

    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = g_new - r.gradient;
    const double f_old = r.value;
    r.x = std::move(x_new);
    r.value = f_new;
    r.gradient = g_new;
    pg = box.projected_gradient(r.x, r.gradient);
    r.gradient_norm = pg.cwiseAbs().maxCoeff();

    const double rel_change = std::abs(f_old - f_new) / std::max(1.0, std::abs(f_new));
    // The gradient bound grows with the objective's magnitude (sums over many observations).
    const double gtol = options.gradient_tolerance * std::max(1.0, std::sqrt(std::abs(f_new)));
    if (rel_change < options.relative_tolerance && r.gradient_norm < gtol) {
      r.converged = true;
      return r;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh_hessian) h *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      h = v * h * v.transpose() + rho * s * s.transpose();
      fresh_hessian = false;
    }
  }
  r.iterations = options.max_iterations;
  r.converged = false;
  return r;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double rel_step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace dynpred
