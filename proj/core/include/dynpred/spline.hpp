#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dynpred {

enum class BasisKind { None, Polynomial, NaturalSpline };

// Time basis for the fixed or random part of a mixed model. All bases include
// the intercept column except `None`, which has zero columns.
//
// Natural splines use the truncated-power construction on knots
// lo = k_0 < k_1 < ... < k_m < k_{m+1} = hi (time rescaled to [0, 1] over the
// boundary knots), giving m + 2 columns: 1, u, and
//   N_j(u) = d_j(u) - d_m(u),  d_j(u) = ((u - k_j)_+^3 - (u - k_{m+1})_+^3) / (k_{m+1} - k_j).
// Each column is linear below lo and above hi.
struct BasisSpec {
  BasisKind kind = BasisKind::Polynomial;
  int degree = 1;                       // polynomial only
  std::vector<double> interior_knots;   // natural spline only
  double boundary_lo = 0.0;
  double boundary_hi = 1.0;

  std::size_t size() const;
  void validate() const;  // throws ConfigError

  static BasisSpec none();
  static BasisSpec polynomial(int degree);
  static BasisSpec natural_spline(std::vector<double> interior_knots, double lo, double hi);
  // Interior knots at the given quantile probabilities of `times`, boundaries at their range.
  static BasisSpec natural_spline_at_quantiles(std::span<const double> times, std::span<const double> probs);

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

std::string to_string(BasisKind kind);
BasisKind parse_basis_kind(const std::string& s);

// Basis row at time t (order 0), or its first / second derivative in t.
Eigen::VectorXd basis_row(const BasisSpec& spec, double t, int derivative_order = 0);

// Natural-spline evaluation returning value and first derivative in one pass.
struct BasisWithDerivative {
  Eigen::VectorXd value;
  Eigen::VectorXd first_derivative;
};
BasisWithDerivative natural_spline_basis(double t, const BasisSpec& spec);

// Stacked basis rows for a series of times.
Eigen::MatrixXd basis_matrix(const BasisSpec& spec, std::span<const double> times);

// Breakpoints of the spec strictly inside (a, b): polynomial pieces between them are exact cubics.
std::vector<double> basis_breakpoints(const BasisSpec& spec, double a, double b);

}  // namespace dynpred
