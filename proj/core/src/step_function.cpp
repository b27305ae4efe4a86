#include "dynpred/step_function.hpp"

#include <algorithm>
#include <stdexcept>

namespace dynpred {

StepFunction::StepFunction(std::vector<double> times, std::vector<double> values, double initial)
    : times_(std::move(times)), values_(std::move(values)), initial_(initial) {
  if (times_.size() != values_.size())
    throw std::invalid_argument("StepFunction: times and values differ in length");
  for (std::size_t k = 1; k < times_.size(); ++k)
    if (!(times_[k] > times_[k - 1]))
      throw std::invalid_argument("StepFunction: jump times must be strictly increasing");
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double StepFunction::left_limit(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

}  // namespace dynpred
