#include "dynpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dynpred/error.hpp"

namespace dynpred {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": input lengths differ");
}

std::vector<std::size_t> order_by_time(std::span<const double> times) {
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  return idx;
}

}  // namespace

StepFunction nelson_aalen(std::span<const double> times, std::span<const int> events) {
  check_lengths(times.size(), events.size(), "nelson_aalen");
  const auto idx = order_by_time(times);
  const std::size_t n = idx.size();
  std::vector<double> jt, jv;
  double cum = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double t = times[idx[k]];
    std::size_t d = 0, m = k;
    while (m < n && times[idx[m]] == t) {
      d += events[idx[m]] != 0;
      ++m;
    }
    if (d > 0) {
      cum += static_cast<double>(d) / static_cast<double>(n - k);
      jt.push_back(t);
      jv.push_back(cum);
    }
    k = m;
  }
  return StepFunction(std::move(jt), std::move(jv), 0.0);
}

StepFunction km_censoring(std::span<const double> times, std::span<const int> events) {
  check_lengths(times.size(), events.size(), "km_censoring");
  const auto idx = order_by_time(times);
  const std::size_t n = idx.size();
  std::vector<double> jt, jv;
  double surv = 1.0;
  std::size_t k = 0;
  while (k < n) {
    const double t = times[idx[k]];
    std::size_t c = 0, m = k;
    while (m < n && times[idx[m]] == t) {
      c += events[idx[m]] == 0;
      ++m;
    }
    if (c > 0) {
      surv *= 1.0 - static_cast<double>(c) / static_cast<double>(n - k);
      jt.push_back(t);
      jv.push_back(surv);
    }
    k = m;
  }
  return StepFunction(std::move(jt), std::move(jv), 1.0);
}

IpcwWeights ipcw_weights(std::span<const double> times, std::span<const int> events, double t_hor,
                         const StepFunction& censoring) {
  check_lengths(times.size(), events.size(), "ipcw_weights");
  IpcwWeights out;
  out.weight.assign(times.size(), 0.0);
  out.status.assign(times.size(), -1);
  const double g_hor_needed = censoring(t_hor);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (events[i] != 0 && times[i] <= t_hor) {
      const double g = censoring.left_limit(times[i]);
      if (!(g > 0.0))
        throw NumericalError("censoring survival is zero at an event time before the horizon; "
                             "use a shorter horizon");
      out.weight[i] = 1.0 / g;
      out.status[i] = 1;
    } else if (times[i] > t_hor) {
      if (!(g_hor_needed > 0.0))
        throw NumericalError("censoring survival is zero at the horizon; use a larger horizon margin");
      out.weight[i] = 1.0 / g_hor_needed;
      out.status[i] = 0;
    }
  }
  return out;
}

double ipcw_brier(std::span<const double> predictions, std::span<const double> times,
                  std::span<const int> events, double t_hor) {
  return ipcw_brier(predictions, times, events, t_hor, km_censoring(times, events));
}

double ipcw_brier(std::span<const double> predictions, std::span<const double> times,
                  std::span<const int> events, double t_hor, const StepFunction& censoring) {
  check_lengths(predictions.size(), times.size(), "ipcw_brier");
  if (predictions.empty()) throw DataError("ipcw_brier: no subjects");
  const auto w = ipcw_weights(times, events, t_hor, censoring);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (w.status[i] < 0) continue;
    const double d = w.status[i] == 1 ? 1.0 : 0.0;
    const double r = d - predictions[i];
    sum += w.weight[i] * r * r;
  }
  return sum / static_cast<double>(predictions.size());
}

std::optional<double> ipcw_auc(std::span<const double> predictions, std::span<const double> times,
                               std::span<const int> events, double t_hor) {
  return ipcw_auc(predictions, times, events, t_hor, km_censoring(times, events));
}

std::optional<double> ipcw_auc(std::span<const double> predictions, std::span<const double> times,
                               std::span<const int> events, double t_hor,
                               const StepFunction& censoring) {
  check_lengths(predictions.size(), times.size(), "ipcw_auc");
  const auto w = ipcw_weights(times, events, t_hor, censoring);

  // Sort controls by prediction; for each case accumulate the control weight
  // strictly below (full credit) and tied (half credit).
  std::vector<std::pair<double, double>> controls;  // (prediction, weight)
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (w.status[i] == 0) controls.emplace_back(predictions[i], w.weight[i]);
  std::sort(controls.begin(), controls.end());
  std::vector<double> prefix(controls.size() + 1, 0.0);
  for (std::size_t k = 0; k < controls.size(); ++k) prefix[k + 1] = prefix[k] + controls[k].second;
  const double control_total = prefix.back();

  double num = 0.0, case_total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (w.status[i] != 1) continue;
    const double p = predictions[i];
    auto lo = std::lower_bound(controls.begin(), controls.end(), std::pair<double, double>(p, -INFINITY));
    auto hi = std::upper_bound(controls.begin(), controls.end(), std::pair<double, double>(p, INFINITY));
    const double below = prefix[static_cast<std::size_t>(lo - controls.begin())];
    const double tied = prefix[static_cast<std::size_t>(hi - controls.begin())] - below;
    num += w.weight[i] * (below + 0.5 * tied);
    case_total += w.weight[i];
  }
  if (case_total <= 0.0 || control_total <= 0.0) return std::nullopt;
  return num / (case_total * control_total);
}

double msep(std::span<const double> predictions, std::span<const double> truth) {
  check_lengths(predictions.size(), truth.size(), "msep");
  if (predictions.empty()) throw DataError("msep: no subjects");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - truth[i];
    s += r * r;
  }
  return s / static_cast<double>(predictions.size());
}

double harrell_concordance(std::span<const double> risk, std::span<const double> times,
                           std::span<const int> events) {
  check_lengths(risk.size(), times.size(), "harrell_concordance");
  check_lengths(risk.size(), events.size(), "harrell_concordance");
  double concordant = 0.0, comparable = 0.0;
  const std::size_t n = risk.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (events[i] == 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      // i had the event first; j outlived it (or was censored strictly later).
      if (j == i || !(times[j] > times[i])) continue;
      comparable += 1.0;
      if (risk[i] > risk[j])
        concordant += 1.0;
      else if (risk[i] == risk[j])
        concordant += 0.5;
    }
  }
  return comparable > 0.0 ? concordant / comparable : 0.5;
}

MetricReport evaluate_predictions(std::span<const double> predictions, std::span<const double> times,
                                  std::span<const int> events, double t_hor,
                                  std::span<const double> truth) {
  MetricReport r;
  const auto g = km_censoring(times, events);
  const auto w = ipcw_weights(times, events, t_hor, g);
  r.brier = ipcw_brier(predictions, times, events, t_hor, g);
  r.auc = ipcw_auc(predictions, times, events, t_hor, g);
  if (!truth.empty()) r.msep = msep(predictions, truth);
  r.n_at_risk = predictions.size();
  r.n_cases = static_cast<std::size_t>(std::count(w.status.begin(), w.status.end(), 1));
  r.n_controls = static_cast<std::size_t>(std::count(w.status.begin(), w.status.end(), 0));
  return r;
}

}  // namespace dynpred
