#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dynpred/step_function.hpp"

namespace dynpred {

// All metric inputs live on the landmark-rescaled clock (time 0 = landmark).

// Nelson-Aalen cumulative hazard; jumps d_j / n_j at each distinct event time.
StepFunction nelson_aalen(std::span<const double> times, std::span<const int> events);

// Kaplan-Meier survival of the censoring distribution (event indicator flipped).
StepFunction km_censoring(std::span<const double> times, std::span<const int> events);

struct IpcwWeights {
  std::vector<double> weight;   // 0 for subjects censored before the horizon
  std::vector<int> status;      // 1 case, 0 control, -1 unusable
};

// Case weight 1/G(t_i-), control weight 1/G(t_hor); throws NumericalError when
// a needed value of G is zero. Cases are subjects with events == 1 and t_i <= t_hor.
IpcwWeights ipcw_weights(std::span<const double> times, std::span<const int> events, double t_hor,
                         const StepFunction& censoring);

double ipcw_brier(std::span<const double> predictions, std::span<const double> times,
                  std::span<const int> events, double t_hor);
double ipcw_brier(std::span<const double> predictions, std::span<const double> times,
                  std::span<const int> events, double t_hor, const StepFunction& censoring);

// Weighted Mann-Whitney statistic over (case, control) pairs, ties count 1/2.
// Empty when there are no cases or no controls.
std::optional<double> ipcw_auc(std::span<const double> predictions, std::span<const double> times,
                               std::span<const int> events, double t_hor);
std::optional<double> ipcw_auc(std::span<const double> predictions, std::span<const double> times,
                               std::span<const int> events, double t_hor,
                               const StepFunction& censoring);

double msep(std::span<const double> predictions, std::span<const double> truth);

// Harrell's C for a risk score (higher score = earlier event). Tied scores count 1/2;
// returns 0.5 when no comparable pair exists.
double harrell_concordance(std::span<const double> risk, std::span<const double> times,
                           std::span<const int> events);

struct MetricReport {
  double brier = 0.0;
  std::optional<double> auc;
  std::optional<double> msep;
  std::size_t n_at_risk = 0;
  std::size_t n_cases = 0;
  std::size_t n_controls = 0;
};

MetricReport evaluate_predictions(std::span<const double> predictions, std::span<const double> times,
                                  std::span<const int> events, double t_hor,
                                  std::span<const double> truth = {});

}  // namespace dynpred
