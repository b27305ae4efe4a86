#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynpred/cox.hpp"

namespace dynpred {

// Martingale residuals delta_i - Lambda_NA(t_i) and their deviance transform.
std::vector<double> martingale_residuals(std::span<const double> times, std::span<const int> events);
std::vector<double> deviance_residuals(std::span<const double> times, std::span<const int> events);

// Sparse PLS1 directions for a univariate response.
struct PlsComponents {
  Eigen::MatrixXd weights;   // p x C, unit columns
  Eigen::MatrixXd loadings;  // p x C
  Eigen::MatrixXd rotation;  // p x C, scores = X * rotation for the undeflated X
  Eigen::MatrixXd scores;    // n x C
  int n_components() const { return static_cast<int>(weights.cols()); }
};

// `x` must be column-centred. Each direction is soft-threshold(X_c' y, eta * max|X_c' y|)
// normalized, X_c being the design deflated on the earlier scores. Stops early
// (with a warning) when a direction or score vanishes.
PlsComponents fit_spls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int n_components, double eta);

enum class SparsityMode { None, Max, Grid };
std::string to_string(SparsityMode mode);

struct SplsOptions {
  SparsityMode mode = SparsityMode::None;
  int max_components = 6;
  int n_folds = 10;
  std::uint64_t seed = 1;
  std::vector<double> eta_grid = {0.0, 0.2, 0.4, 0.6, 0.8};
  // Both set: skip CV and fit with these values.
  std::optional<int> fixed_components;
  std::optional<double> fixed_eta;
};

struct SplsDrFit {
  std::vector<std::string> columns;  // non-constant training columns
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
  double eta = 0.0;
  PlsComponents components;
  CoxFit inner;                      // Cox model on component scores comp1..compC
  // cv_error[e][c-1]: CV deviance for eta grid entry e and c components (inf if unavailable).
  std::vector<double> eta_candidates;
  std::vector<std::vector<double>> cv_error;

  int n_components() const { return components.n_components(); }
  Eigen::MatrixXd scores(const DesignMatrix& design) const;
};

SplsDrFit fit_spls_dr(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                      const SplsOptions& options = {});

std::vector<double> predict_spls_probability(const SplsDrFit& fit, const DesignMatrix& design, double t_hor);

}  // namespace dynpred
