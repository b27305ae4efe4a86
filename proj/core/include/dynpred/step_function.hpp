#pragma once

#include <span>
#include <vector>

namespace dynpred {

// Right-continuous step function: value(t) = values[k] for the largest k with
// times[k] <= t, and `initial` before the first jump.
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> times, std::vector<double> values, double initial = 0.0);

  double operator()(double t) const;
  // Left limit f(t-): value at the largest jump time strictly below t.
  double left_limit(double t) const;

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double initial() const noexcept { return initial_; }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }

  friend bool operator==(const StepFunction&, const StepFunction&) = default;

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  double initial_ = 0.0;
};

}  // namespace dynpred
