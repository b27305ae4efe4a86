#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynpred/step_function.hpp"
#include "dynpred/summaries.hpp"

namespace dynpred {

// Proportional hazards fit lambda_0(t) exp(x'coef) on the landmark clock.
// The linear predictor is centred at the training means; baseline_chf is the
// Breslow estimator for that centred predictor.
struct CoxFit {
  std::vector<std::string> columns;  // columns in the model
  Eigen::VectorXd coef;              // original scale
  Eigen::VectorXd means;             // training means of `columns`
  Eigen::VectorXd sds;               // training standard deviations of `columns`
  StepFunction baseline_chf;
  double loglik_partial = 0.0;
  int iterations = 0;

  double linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& row) const;
  int n_coef() const { return static_cast<int>(coef.size()); }
};

// Subjects grouped by tied times, largest time first; shared by the Cox-type learners.
class RiskSets {
 public:
  RiskSets(std::span<const double> times, std::span<const int> events);

  std::size_t size() const noexcept { return times_.size(); }
  std::span<const double> times() const noexcept { return times_; }
  std::span<const int> events() const noexcept { return events_; }

  // Breslow partial log-likelihood for linear predictor eta.
  double loglik(const Eigen::VectorXd& eta) const;
  // d loglik / d eta and the diagonal of the second derivative (negated, >= 0).
  void eta_derivatives(const Eigen::VectorXd& eta, Eigen::VectorXd& gradient, Eigen::VectorXd& weight) const;
  // Full score and observed information for x'beta.
  void score_information(const Eigen::MatrixXd& x, const Eigen::VectorXd& eta, Eigen::VectorXd& score,
                         Eigen::MatrixXd& information) const;
  // Breslow baseline cumulative hazard for linear predictor eta.
  StepFunction breslow(const Eigen::VectorXd& eta) const;
  std::size_t n_events() const noexcept { return n_events_; }

 private:
  std::vector<double> times_;
  std::vector<int> events_;
  std::vector<std::size_t> order_;                      // descending time
  std::vector<std::pair<std::size_t, std::size_t>> groups_;  // [begin, end) in order_
  std::vector<int> group_events_;
  std::size_t n_events_ = 0;
};

struct CoxOptions {
  int max_iterations = 100;
  double score_tolerance = 1e-8;      // infinity norm on the standardized scale
  double divergence_threshold = 50.0; // |coef| on the standardized scale
};

CoxFit fit_cox(const Eigen::MatrixXd& x, std::span<const std::string> names, std::span<const double> times,
               std::span<const int> events, const CoxOptions& options = {});
CoxFit fit_cox(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
               const CoxOptions& options = {});

// Builds a CoxFit for given original-scale coefficients (Breslow baseline, partial loglik).
CoxFit make_cox_fit(const Eigen::MatrixXd& x, std::span<const std::string> names, std::span<const double> times,
                    std::span<const int> events, const Eigen::VectorXd& coef);

double cox_aic(const CoxFit& fit);

// Columns of `design` after dropping zero-variance and linearly dependent ones
// (later columns of a dependent set are dropped).
std::vector<std::string> independent_columns(const DesignMatrix& design, double tolerance = 1e-8);

// Greedy backward elimination on AIC = -2 loglik + 2 k, starting from the
// independent columns. Stops when no single removal lowers AIC.
CoxFit backward_select_cox(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                           const CoxOptions& options = {});

// 1 - exp(-Lambda0(t_hor) exp(eta)) for each row; columns matched by name.
std::vector<double> predict_cox_probability(const CoxFit& fit, const DesignMatrix& design, double t_hor);
double predict_cox_probability(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& row, double t_hor);

// Row gathered from `design` in `fit.columns` order; throws DataError naming a missing column.
Eigen::MatrixXd gather_columns(const DesignMatrix& design, std::span<const std::string> columns);

}  // namespace dynpred
