#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynpred/dataset.hpp"
#include "dynpred/spline.hpp"

namespace dynpred {

enum class Link { Identity, Logit };

std::string to_string(Link link);
Link parse_link(const std::string& s);

struct MixedModelSpec {
  BasisSpec fixed = BasisSpec::polynomial(1);
  BasisSpec random = BasisSpec::polynomial(1);
  double time_origin = 0.0;       // bases are evaluated at t - time_origin
  bool force_zero_random = false; // B fixed at 0 (plain GLM / fixed-effects fit)
  int max_iterations = 500;
};

// One marker's generalized linear mixed model,
//   g(E[Y_ij | b_i]) = X(t_ij)' beta + Z(t_ij)' b_i,  b_i ~ N(0, B),
// fitted by maximum likelihood. B is carried through its lower Cholesky factor.
struct MixedModelFit {
  std::string marker;
  Link link = Link::Identity;
  Eigen::VectorXd beta;
  Eigen::MatrixXd chol_b;   // lower triangular, B = L L'
  double sigma2 = 0.0;      // residual variance, identity link only
  BasisSpec basis_fixed;
  BasisSpec basis_random;
  double time_origin = 0.0;
  double loglik = 0.0;
  int iterations = 0;

  Eigen::MatrixXd cov_b() const { return chol_b * chol_b.transpose(); }
  std::size_t n_random() const { return basis_random.size(); }
  // Linear predictor X(t)'beta + Z(t)'b and its time derivatives.
  double linear_predictor(double t, const Eigen::VectorXd& b, int derivative_order = 0) const;
};

// Exact Gaussian marginal log-likelihood, V_i = Z_i B Z_i' + sigma2 I.
double lmm_loglik(std::span<const MarkerSeries> series, const MixedModelSpec& spec, const Eigen::VectorXd& beta,
                  const Eigen::MatrixXd& cov_b, double sigma2);

MixedModelFit fit_lmm(std::span<const MarkerSeries> series, const MixedModelSpec& spec,
                      const std::string& marker = {});

// Laplace-approximated marginal log-likelihood of the logistic mixed model.
double glmm_laplace_loglik(std::span<const MarkerSeries> series, const MixedModelSpec& spec,
                           const Eigen::VectorXd& beta, const Eigen::MatrixXd& chol_b);

MixedModelFit fit_glmm_logistic(std::span<const MarkerSeries> series, const MixedModelSpec& spec,
                                const std::string& marker = {});

MixedModelFit fit_mixed_model(std::span<const MarkerSeries> series, MarkerNature nature,
                              const MixedModelSpec& spec, const std::string& marker = {});

// Identity link: BLUP B Z'V^{-1}(y - X beta). Logit link: posterior mode of b.
// No observations gives the prior mean 0.
Eigen::VectorXd predict_random_effects(const MixedModelFit& fit, const MarkerSeries& series);

}  // namespace dynpred
