#pragma once

#include <functional>
#include <span>
#include <vector>

namespace dynpred {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

// n-point rule; the 64-point rule is computed once and cached.
const GaussLegendreRule& gauss_legendre(std::size_t n = 64);

// Composite Gauss-Legendre over [a, b] split at the given interior breakpoints.
double integrate(const std::function<double(double)>& f, double a, double b,
                 std::span<const double> breakpoints = {}, std::size_t n = 64);

}  // namespace dynpred
