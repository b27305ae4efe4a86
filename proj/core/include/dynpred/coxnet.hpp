#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dynpred/cox.hpp"

namespace dynpred {

// Elastic-net penalized Cox regression. Objective on the standardized scale:
//   -loglik(beta) / n + lambda * (alpha * |beta|_1 + (1 - alpha) / 2 * |beta|_2^2)
// with alpha = 1 the lasso and alpha = 0 ridge.
struct CoxnetOptions {
  double alpha = 1.0;
  int n_lambda = 100;
  double lambda_min_ratio = 1e-3;
  int n_folds = 10;
  std::uint64_t seed = 1;
  bool standardize = true;
  bool append_zero_lambda = false;        // extends the path with lambda = 0
  std::optional<double> fixed_lambda;     // skip the path and CV, fit at this lambda
  long max_passes = 100000;
  double tolerance = 1e-9;
};

struct ElasticNetPath {
  double alpha = 1.0;
  std::vector<std::string> columns;             // penalized (non-constant) columns
  std::vector<double> lambda_grid;              // decreasing
  std::vector<Eigen::VectorXd> coef_per_lambda; // original scale
  std::vector<double> cv_error;                 // cross-validated partial-likelihood deviance per event
  std::vector<double> cv_se;
  std::size_t selected = 0;
  double lambda_selected = 0.0;
  CoxFit fit;                                   // model at lambda_selected
  // Penalized objective after every proximal-Newton pass, per lambda.
  std::vector<std::vector<double>> objective_trace;
};

// Largest lambda with an all-zero solution (alpha floored at 0.001).
double coxnet_lambda_max(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                         double alpha, bool standardize = true);

ElasticNetPath fit_coxnet(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                          const CoxnetOptions& options = {});

// Coefficients (original scale) along a user-supplied decreasing lambda grid, no CV.
ElasticNetPath coxnet_path(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                           std::span<const double> lambdas, const CoxnetOptions& options = {});

}  // namespace dynpred
