#include "dynpred/spline.hpp"

#include <algorithm>
#include <cmath>

#include "dynpred/error.hpp"

namespace dynpred {

namespace {

// (x)_+^p and its derivatives, order 0..2.
double truncated_power(double x, int order) {
  if (x <= 0.0) return 0.0;
  switch (order) {
    case 0: return x * x * x;
    case 1: return 3.0 * x * x;
    default: return 6.0 * x;
  }
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::size_t BasisSpec::size() const {
  switch (kind) {
    case BasisKind::None: return 0;
    case BasisKind::Polynomial: return static_cast<std::size_t>(degree) + 1;
    case BasisKind::NaturalSpline: return interior_knots.size() + 2;
  }
  return 0;
}

void BasisSpec::validate() const {
  if (kind == BasisKind::Polynomial && (degree < 0 || degree > 6))
    throw ConfigError("polynomial basis degree must be in [0, 6]");
  if (kind == BasisKind::NaturalSpline) {
    if (!(boundary_hi > boundary_lo)) throw ConfigError("natural spline boundary knots must be increasing");
    for (std::size_t j = 0; j < interior_knots.size(); ++j) {
      if (!(interior_knots[j] > boundary_lo && interior_knots[j] < boundary_hi))
        throw ConfigError("natural spline interior knots must lie strictly inside the boundary knots");
      if (j > 0 && !(interior_knots[j] > interior_knots[j - 1]))
        throw ConfigError("natural spline knots must be strictly increasing");
    }
  }
}

BasisSpec BasisSpec::none() {
  BasisSpec s;
  s.kind = BasisKind::None;
  s.degree = -1;
  return s;
}

BasisSpec BasisSpec::polynomial(int degree) {
  BasisSpec s;
  s.kind = BasisKind::Polynomial;
  s.degree = degree;
  s.validate();
  return s;
}

BasisSpec BasisSpec::natural_spline(std::vector<double> interior_knots, double lo, double hi) {
  BasisSpec s;
  s.kind = BasisKind::NaturalSpline;
  s.degree = 3;
  s.interior_knots = std::move(interior_knots);
  s.boundary_lo = lo;
  s.boundary_hi = hi;
  s.validate();
  return s;
}

BasisSpec BasisSpec::natural_spline_at_quantiles(std::span<const double> times, std::span<const double> probs) {
  if (times.empty()) throw DataError("cannot place spline knots without observation times");
  std::vector<double> v(times.begin(), times.end());
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  if (!(hi > lo)) throw DataError("cannot place spline knots: all observation times coincide");
  std::vector<double> knots;
  for (double p : probs) {
    const double q = quantile(v, p);
    // Tied quantiles would give coincident knots; keep only strictly increasing interior ones.
    if (q > lo && q < hi && (knots.empty() || q > knots.back() + 1e-9 * (hi - lo))) knots.push_back(q);
  }
  return natural_spline(std::move(knots), lo, hi);
}

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::None: return "none";
    case BasisKind::Polynomial: return "polynomial";
    case BasisKind::NaturalSpline: return "natural-spline";
  }
  return "none";
}

BasisKind parse_basis_kind(const std::string& s) {
  if (s == "none") return BasisKind::None;
  if (s == "polynomial") return BasisKind::Polynomial;
  if (s == "natural-spline") return BasisKind::NaturalSpline;
  throw ConfigError("unknown basis kind '" + s + "'");
}

Eigen::VectorXd basis_row(const BasisSpec& spec, double t, int order) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.size()));
  if (spec.kind == BasisKind::None) return row;

  if (spec.kind == BasisKind::Polynomial) {
    for (int p = order; p <= spec.degree; ++p) {
      double coef = 1.0;
      for (int m = 0; m < order; ++m) coef *= static_cast<double>(p - m);
      row[p] = coef * std::pow(t, p - order);
    }
    return row;
  }

  const double width = spec.boundary_hi - spec.boundary_lo;
  const double u = (t - spec.boundary_lo) / width;
  const double chain = std::pow(1.0 / width, order);
  const std::size_t m = spec.interior_knots.size();
  std::vector<double> knots(m + 2);
  knots[0] = 0.0;
  for (std::size_t j = 0; j < m; ++j) knots[j + 1] = (spec.interior_knots[j] - spec.boundary_lo) / width;
  knots[m + 1] = 1.0;

  if (order == 0) {
    row[0] = 1.0;
    row[1] = u;
  } else if (order == 1) {
    row[1] = chain;
  }

  auto d = [&](std::size_t j) {
    return (truncated_power(u - knots[j], order) - truncated_power(u - knots[m + 1], order)) /
           (knots[m + 1] - knots[j]);
  };
  const double d_last = d(m);
  for (std::size_t j = 0; j < m; ++j) row[static_cast<Eigen::Index>(j) + 2] = (d(j) - d_last) * chain;
  return row;
}

BasisWithDerivative natural_spline_basis(double t, const BasisSpec& spec) {
  return {basis_row(spec, t, 0), basis_row(spec, t, 1)};
}

Eigen::MatrixXd basis_matrix(const BasisSpec& spec, std::span<const double> times) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(spec.size()));
  for (std::size_t i = 0; i < times.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = basis_row(spec, times[i]).transpose();
  return m;
}

std::vector<double> basis_breakpoints(const BasisSpec& spec, double a, double b) {
  std::vector<double> out;
  if (spec.kind != BasisKind::NaturalSpline) return out;
  std::vector<double> all{spec.boundary_lo};
  all.insert(all.end(), spec.interior_knots.begin(), spec.interior_knots.end());
  all.push_back(spec.boundary_hi);
  for (double k : all)
    if (k > a && k < b) out.push_back(k);
  return out;
}

}  // namespace dynpred
