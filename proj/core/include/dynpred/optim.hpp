#pragma once

#include <functional>

#include <Eigen/Core>

#include "dynpred/error.hpp"

namespace dynpred {

// Objective value; fills *grad when non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-8;  // on successive objective values
  double gradient_tolerance = 1e-5;  // projected-gradient infinity norm, scaled by sqrt(max(1, |f|))
  Eigen::VectorXd lower;             // empty = unbounded
  Eigen::VectorXd upper;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  double gradient_norm = 0.0;  // projected, infinity norm
  int iterations = 0;
  bool converged = false;
};

// Box-constrained BFGS with projected backtracking line search.
OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& options = {});

// Central-difference gradient, used where an analytic gradient is not available.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double rel_step = 1e-6);

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd best, double gradient_norm)
      : NumericalError(what), best_(std::move(best)), gradient_norm_(gradient_norm) {}
  const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  Eigen::VectorXd best_;
  double gradient_norm_;
};

}  // namespace dynpred
