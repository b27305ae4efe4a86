#include "dynpred/cox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "dynpred/error.hpp"
#include "dynpred/log.hpp"

namespace dynpred {

RiskSets::RiskSets(std::span<const double> times, std::span<const int> events)
    : times_(times.begin(), times.end()), events_(events.begin(), events.end()) {
  if (times.size() != events.size()) throw std::invalid_argument("RiskSets: times and events differ in length");
  order_.resize(times_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return times_[a] > times_[b]; });
  std::size_t k = 0;
  while (k < order_.size()) {
    std::size_t m = k;
    int d = 0;
    while (m < order_.size() && times_[order_[m]] == times_[order_[k]]) {
      d += events_[order_[m]] != 0;
      ++m;
    }
    groups_.emplace_back(k, m);
    group_events_.push_back(d);
    n_events_ += static_cast<std::size_t>(d);
    k = m;
  }
}

double RiskSets::loglik(const Eigen::VectorXd& eta) const {
  if (eta.size() == 0) return 0.0;
  const double shift = eta.maxCoeff();
  double s0 = 0.0, ll = 0.0;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto [b, e] = groups_[g];
    for (std::size_t m = b; m < e; ++m) s0 += std::exp(eta[static_cast<Eigen::Index>(order_[m])] - shift);
    if (group_events_[g] == 0) continue;
    for (std::size_t m = b; m < e; ++m)
      if (events_[order_[m]]) ll += eta[static_cast<Eigen::Index>(order_[m])];
    ll -= group_events_[g] * (std::log(s0) + shift);
  }
  return ll;
}

void RiskSets::eta_derivatives(const Eigen::VectorXd& eta, Eigen::VectorXd& gradient, Eigen::VectorXd& weight) const {
  const auto n = static_cast<Eigen::Index>(times_.size());
  gradient.resize(n);
  weight.resize(n);
  const double shift = n ? eta.maxCoeff() : 0.0;
  std::vector<double> s0(groups_.size());
  double acc = 0.0;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    for (std::size_t m = groups_[g].first; m < groups_[g].second; ++m)
      acc += std::exp(eta[static_cast<Eigen::Index>(order_[m])] - shift);
    s0[g] = acc;
  }
  double a = 0.0, b = 0.0;
  for (std::size_t gi = groups_.size(); gi-- > 0;) {
    const double d = group_events_[gi];
    if (d > 0) {
      a += d / s0[gi];
      b += d / (s0[gi] * s0[gi]);
    }
    for (std::size_t m = groups_[gi].first; m < groups_[gi].second; ++m) {
      const auto i = static_cast<Eigen::Index>(order_[m]);
      const double r = std::exp(eta[i] - shift);
      gradient[i] = (events_[order_[m]] ? 1.0 : 0.0) - r * a;
      weight[i] = std::max(r * a - r * r * b, 0.0);
    }
  }
}

void RiskSets::score_information(const Eigen::MatrixXd& x, const Eigen::VectorXd& eta, Eigen::VectorXd& score,
                                 Eigen::MatrixXd& information) const {
  const Eigen::Index p = x.cols();
  score = Eigen::VectorXd::Zero(p);
  information = Eigen::MatrixXd::Zero(p, p);
  if (times_.empty()) return;
  const double shift = eta.maxCoeff();
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto [b, e] = groups_[g];
    for (std::size_t m = b; m < e; ++m) {
      const auto i = static_cast<Eigen::Index>(order_[m]);
      const double r = std::exp(eta[i] - shift);
      s0 += r;
      s1.noalias() += r * x.row(i).transpose();
      s2.selfadjointView<Eigen::Lower>().rankUpdate(x.row(i).transpose(), r);
    }
    const int d = group_events_[g];
    if (d == 0) continue;
    for (std::size_t m = b; m < e; ++m)
      if (events_[order_[m]]) score.noalias() += x.row(static_cast<Eigen::Index>(order_[m])).transpose();
    const Eigen::VectorXd mean = s1 / s0;
    score.noalias() -= d * mean;
    Eigen::MatrixXd full = s2.selfadjointView<Eigen::Lower>();
    information.noalias() += d * (full / s0 - mean * mean.transpose());
  }
}

StepFunction RiskSets::breslow(const Eigen::VectorXd& eta) const {
  std::vector<double> s0(groups_.size());
  double acc = 0.0;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    for (std::size_t m = groups_[g].first; m < groups_[g].second; ++m)
      acc += eta.size() ? std::exp(eta[static_cast<Eigen::Index>(order_[m])]) : 1.0;
    s0[g] = acc;
  }
  std::vector<double> jt, jv;
  double cum = 0.0;
  for (std::size_t gi = groups_.size(); gi-- > 0;) {
    if (group_events_[gi] == 0) continue;
    cum += group_events_[gi] / s0[gi];
    jt.push_back(times_[order_[groups_[gi].first]]);
    jv.push_back(cum);
  }
  return StepFunction(std::move(jt), std::move(jv), 0.0);
}

double CoxFit::linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& row) const {
  return coef.size() ? (row - means).dot(coef) : 0.0;
}

namespace {

void column_moments(const Eigen::MatrixXd& x, Eigen::VectorXd& means, Eigen::VectorXd& sds) {
  const Eigen::Index n = x.rows();
  means = n ? Eigen::VectorXd(x.colwise().mean().transpose()) : Eigen::VectorXd::Zero(x.cols());
  sds.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    sds[j] = n > 1 ? std::sqrt((x.col(j).array() - means[j]).square().sum() / static_cast<double>(n - 1)) : 0.0;
}

}  // namespace

CoxFit make_cox_fit(const Eigen::MatrixXd& x, std::span<const std::string> names, std::span<const double> times,
                    std::span<const int> events, const Eigen::VectorXd& coef) {
  CoxFit fit;
  fit.columns.assign(names.begin(), names.end());
  fit.coef = coef;
  column_moments(x, fit.means, fit.sds);
  const RiskSets rs(times, events);
  Eigen::VectorXd eta = coef.size() ? Eigen::VectorXd((x.rowwise() - fit.means.transpose()) * coef)
                                    : Eigen::VectorXd::Zero(x.rows());
  fit.baseline_chf = rs.breslow(eta);
  fit.loglik_partial = rs.loglik(eta);
  return fit;
}

namespace {

NumericalError diverging(std::span<const std::string> names, Eigen::Index column) {
  return NumericalError("Cox model: monotone likelihood, coefficient for column '" +
                        names[static_cast<std::size_t>(column)] + "' diverges");
}

}  // namespace

CoxFit fit_cox(const Eigen::MatrixXd& x, std::span<const std::string> names, std::span<const double> times,
               std::span<const int> events, const CoxOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != times.size() || times.size() != events.size())
    throw std::invalid_argument("fit_cox: design rows, times and events differ in length");
  if (names.size() != static_cast<std::size_t>(x.cols()))
    throw std::invalid_argument("fit_cox: one name per design column is required");
  if (std::none_of(events.begin(), events.end(), [](int e) { return e != 0; }))
    throw DataError("Cox model needs at least one event");

  const RiskSets rs(times, events);
  const Eigen::Index p = x.cols();
  Eigen::VectorXd means, sds;
  column_moments(x, means, sds);
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(sds[j] > 0.0))
      throw NumericalError("Cox model: singular information matrix (column '" + names[static_cast<std::size_t>(j)] +
                           "' is constant)");
  const Eigen::MatrixXd xs = (x.rowwise() - means.transpose()).array().rowwise() / sds.transpose().array();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(x.rows());
  double ll = rs.loglik(eta);
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
  int it = 0;
  for (; it < options.max_iterations && p > 0; ++it) {
    rs.score_information(xs, eta, score, info);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const bool singular = ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12) || !ldlt.isPositive();
    if (score.cwiseAbs().maxCoeff() < options.score_tolerance) {
      Eigen::Index worst = 0;
      if (!singular && ldlt.solve(score).cwiseAbs().maxCoeff(&worst) < 1e-6) break;
      // The score vanishes while the information collapses: the likelihood keeps rising.
      if (singular) beta.cwiseAbs().maxCoeff(&worst);
      throw diverging(names, worst);
    }
    if (singular) throw NumericalError("Cox model: singular information matrix");
    const Eigen::VectorXd step = ldlt.solve(score);
    double t = 1.0;
    Eigen::VectorXd beta_new = beta + step;
    Eigen::VectorXd eta_new = xs * beta_new;
    double ll_new = rs.loglik(eta_new);
    while (!(ll_new >= ll - 1e-12 * std::abs(ll)) && t > 1e-8) {
      t *= 0.5;
      beta_new = beta + t * step;
      eta_new = xs * beta_new;
      ll_new = rs.loglik(eta_new);
    }
    beta = beta_new;
    eta = eta_new;
    ll = ll_new;
    if ((t * step).cwiseAbs().maxCoeff() < 1e-13) break;
  }
  Eigen::Index worst = 0;
  const double largest = p > 0 ? beta.cwiseAbs().maxCoeff(&worst) : 0.0;
  if (it == options.max_iterations) {
    if (largest > options.divergence_threshold) throw diverging(names, worst);
    throw NumericalError("Cox model: Newton-Raphson did not converge");
  }
  // A converged fit can still carry huge coefficients on nearly collinear columns.
  if (largest > options.divergence_threshold)
    warn("Cox model: standardized coefficient for column '" + names[static_cast<std::size_t>(worst)] + "' is " +
         std::to_string(beta[worst]) + "; the design is close to collinear");

  CoxFit fit;
  fit.columns.assign(names.begin(), names.end());
  fit.coef = beta.cwiseQuotient(sds);
  fit.means = means;
  fit.sds = sds;
  fit.baseline_chf = rs.breslow(eta);
  fit.loglik_partial = ll;
  fit.iterations = it;
  return fit;
}

CoxFit fit_cox(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
               const CoxOptions& options) {
  return fit_cox(design.values, design.column_names, times, events, options);
}

double cox_aic(const CoxFit& fit) { return -2.0 * fit.loglik_partial + 2.0 * fit.n_coef(); }

std::vector<std::string> independent_columns(const DesignMatrix& design, double tolerance) {
  const Eigen::Index n = design.rows();
  std::vector<Eigen::VectorXd> basis;
  std::vector<std::string> keep;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    Eigen::VectorXd c = design.values.col(j).array() - design.values.col(j).mean();
    const double norm = c.norm();
    const double scale = std::max(1.0, design.values.col(j).cwiseAbs().maxCoeff()) * std::sqrt(static_cast<double>(n));
    if (!(norm > 1e-12 * scale)) continue;
    c /= norm;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) c -= q.dot(c) * q;
    const double resid = c.norm();
    if (resid < tolerance) continue;
    basis.push_back(c / resid);
    keep.push_back(design.column_names[static_cast<std::size_t>(j)]);
  }
  return keep;
}

CoxFit backward_select_cox(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                           const CoxOptions& options) {
  std::vector<std::string> current = independent_columns(design);
  auto fit_subset = [&](const std::vector<std::string>& cols) {
    return fit_cox(gather_columns(design, cols), cols, times, events, options);
  };
  CoxFit best = fit_subset(current);
  double best_aic = cox_aic(best);
  while (!current.empty()) {
    std::size_t drop = current.size();
    CoxFit candidate_best;
    double candidate_aic = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < current.size(); ++j) {
      std::vector<std::string> cols = current;
      cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(j));
      try {
        CoxFit f = fit_subset(cols);
        const double aic = cox_aic(f);
        if (aic < candidate_aic) {
          candidate_aic = aic;
          candidate_best = std::move(f);
          drop = j;
        }
      } catch (const NumericalError&) {
        // A subset that cannot be fitted is not a candidate.
      }
    }
    if (drop == current.size() || !(candidate_aic < best_aic)) break;
    current.erase(current.begin() + static_cast<std::ptrdiff_t>(drop));
    best = std::move(candidate_best);
    best_aic = candidate_aic;
  }
  return best;
}

Eigen::MatrixXd gather_columns(const DesignMatrix& design, std::span<const std::string> columns) {
  Eigen::MatrixXd out(design.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto src = design.find_column(columns[j]);
    if (src < 0) throw DataError("new data is missing model column '" + columns[j] + "'");
    out.col(static_cast<Eigen::Index>(j)) = design.values.col(src);
  }
  return out;
}

double predict_cox_probability(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& row, double t_hor) {
  const double h0 = fit.baseline_chf(t_hor);
  return 1.0 - std::exp(-h0 * std::exp(fit.linear_predictor(row)));
}

std::vector<double> predict_cox_probability(const CoxFit& fit, const DesignMatrix& design, double t_hor) {
  const Eigen::MatrixXd x = gather_columns(design, fit.columns);
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out[static_cast<std::size_t>(i)] = predict_cox_probability(fit, x.row(i).transpose(), t_hor);
  return out;
}

}  // namespace dynpred
