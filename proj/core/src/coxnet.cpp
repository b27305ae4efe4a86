#include "dynpred/coxnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynpred/error.hpp"
#include "dynpred/folds.hpp"
#include "dynpred/log.hpp"

namespace dynpred {

namespace {

struct Standardized {
  std::vector<std::string> columns;
  std::vector<Eigen::Index> source;
  Eigen::MatrixXd x;  // centred, optionally scaled
  Eigen::VectorXd means;
  Eigen::VectorXd scales;
};

Standardized standardize(const DesignMatrix& design, bool scale) {
  Standardized s;
  const Eigen::Index n = design.rows();
  std::vector<double> means, scales;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    const double m = design.values.col(j).mean();
    const double sd =
        n > 1 ? std::sqrt((design.values.col(j).array() - m).square().sum() / static_cast<double>(n)) : 0.0;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) continue;
    s.columns.push_back(design.column_names[static_cast<std::size_t>(j)]);
    s.source.push_back(j);
    means.push_back(m);
    scales.push_back(scale ? sd : 1.0);
  }
  const auto p = static_cast<Eigen::Index>(s.source.size());
  s.means = Eigen::Map<Eigen::VectorXd>(means.data(), p);
  s.scales = Eigen::Map<Eigen::VectorXd>(scales.data(), p);
  s.x.resize(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    s.x.col(j) = (design.values.col(s.source[static_cast<std::size_t>(j)]).array() - s.means[j]) / s.scales[j];
  return s;
}

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

class CoxnetSolver {
 public:
  CoxnetSolver(const Eigen::MatrixXd& x, const RiskSets& rs, double alpha, long max_passes, double tol)
      : x_(x), rs_(rs), alpha_(alpha), max_passes_(max_passes), tol_(tol), n_(static_cast<double>(x.rows())) {}

  double objective(const Eigen::VectorXd& beta, double lambda) const {
    const Eigen::VectorXd eta = x_ * beta;
    return -rs_.loglik(eta) / n_ + lambda * (alpha_ * beta.lpNorm<1>() + 0.5 * (1.0 - alpha_) * beta.squaredNorm());
  }

  // Proximal Newton: quadratic model of the partial likelihood, coordinate
  // descent on the model, backtracking on the true objective.
  void solve(Eigen::VectorXd& beta, double lambda, std::vector<double>& trace) {
    const Eigen::Index p = x_.cols();
    passes_ = 0;  // the pass budget applies per lambda
    double f_cur = objective(beta, lambda);
    trace.push_back(f_cur);
    if (p == 0) return;
    Eigen::VectorXd g, w;
    double last_step = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < 200; ++outer) {
      const Eigen::VectorXd eta = x_ * beta;
      rs_.eta_derivatives(eta, g, w);
      Eigen::VectorXd v(p);
      for (Eigen::Index j = 0; j < p; ++j) v[j] = w.dot(x_.col(j).cwiseAbs2()) / n_;

      Eigen::VectorXd b = beta;
      Eigen::VectorXd r = g;  // g - W X (b - beta)
      const double l1 = lambda * alpha_;
      const double l2 = lambda * (1.0 - alpha_);
      auto sweep = [&](bool active_only) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (active_only && b[j] == 0.0) continue;
          const double denom = v[j] + l2;
          if (!(denom > 0.0)) continue;
          const double z = v[j] * b[j] + x_.col(j).dot(r) / n_;
          const double bj = soft_threshold(z, l1) / denom;
          const double delta = bj - b[j];
          if (delta != 0.0) {
            r.noalias() -= delta * w.cwiseProduct(x_.col(j));
            b[j] = bj;
            max_change = std::max(max_change, std::abs(delta) * std::sqrt(v[j] + l2));
          }
        }
        // Out of budget: stop sweeping and keep the current iterate.
        if (++passes_ >= max_passes_) return 0.0;
        return max_change;
      };
      // Inexact inner solves while the outer steps are still large.
      const double inner_tol = std::max(tol_, 0.1 * last_step);
      for (;;) {
        if (sweep(false) < inner_tol) break;
        while (sweep(true) >= inner_tol) {
        }
      }

      const Eigen::VectorXd delta = b - beta;
      double t = 1.0;
      double f_new = objective(beta + delta, lambda);
      while (f_new > f_cur && t > 1e-10) {
        t *= 0.5;
        f_new = objective(beta + t * delta, lambda);
      }
      const bool exhausted = passes_ >= max_passes_;
      if (exhausted)
        warn("penalized Cox coordinate descent hit the " + std::to_string(max_passes_) + "-pass budget at lambda " +
             std::to_string(lambda) + "; keeping the last iterate");
      if (f_new > f_cur) break;  // no representable descent left
      beta += t * delta;
      last_step = 0.0;
      for (Eigen::Index j = 0; j < p; ++j)
        last_step = std::max(last_step, t * std::abs(delta[j]) * std::sqrt(v[j] + lambda * (1.0 - alpha_)));
      const double decrease = f_cur - f_new;
      f_cur = f_new;
      trace.push_back(f_cur);
      if (exhausted || (t * delta).cwiseAbs().maxCoeff() < 1e-9 || decrease < 1e-14 * std::max(1.0, std::abs(f_cur)))
        break;
    }
  }

 private:
  const Eigen::MatrixXd& x_;
  const RiskSets& rs_;
  double alpha_;
  long max_passes_;
  double tol_;
  double n_;
  long passes_ = 0;
};

double lambda_max_std(const Eigen::MatrixXd& x, const RiskSets& rs, double alpha) {
  if (x.cols() == 0) return 0.0;
  Eigen::VectorXd g, w;
  rs.eta_derivatives(Eigen::VectorXd::Zero(x.rows()), g, w);
  const Eigen::VectorXd grad = x.transpose() * g / static_cast<double>(x.rows());
  return grad.cwiseAbs().maxCoeff() / std::max(alpha, 1e-3);
}

std::vector<double> make_grid(double lmax, int n, double ratio) {
  std::vector<double> grid;
  if (!(lmax > 0.0)) lmax = 1e-6;
  for (int k = 0; k < n; ++k) {
    const double frac = n > 1 ? static_cast<double>(k) / (n - 1) : 0.0;
    grid.push_back(lmax * std::pow(ratio, frac));
  }
  return grid;
}

struct PathResult {
  std::vector<Eigen::VectorXd> coef_orig;
  std::vector<std::vector<double>> traces;
};

PathResult run_path(const Standardized& s, const RiskSets& rs, std::span<const double> lambdas,
                    const CoxnetOptions& o) {
  PathResult out;
  CoxnetSolver solver(s.x, rs, o.alpha, o.max_passes, o.tolerance);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(s.x.cols());
  for (double lambda : lambdas) {
    std::vector<double> trace;
    solver.solve(beta, lambda, trace);
    out.coef_orig.push_back(beta.cwiseQuotient(s.scales));
    out.traces.push_back(std::move(trace));
  }
  return out;
}

void check_inputs(const DesignMatrix& d, std::span<const double> times, std::span<const int> events,
                  const CoxnetOptions& o) {
  if (static_cast<std::size_t>(d.rows()) != times.size() || times.size() != events.size())
    throw std::invalid_argument("fit_coxnet: design rows, times and events differ in length");
  if (!(o.alpha >= 0.0 && o.alpha <= 1.0)) throw ConfigError("elastic-net mixing parameter must be in [0, 1]");
  if (std::none_of(events.begin(), events.end(), [](int e) { return e != 0; }))
    throw DataError("penalized Cox model needs at least one event");
}

}  // namespace

double coxnet_lambda_max(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                         double alpha, bool standardize_columns) {
  const auto s = standardize(design, standardize_columns);
  const RiskSets rs(times, events);
  return lambda_max_std(s.x, rs, alpha);
}

ElasticNetPath coxnet_path(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                           std::span<const double> lambdas, const CoxnetOptions& options) {
  check_inputs(design, times, events, options);
  for (std::size_t k = 1; k < lambdas.size(); ++k)
    if (!(lambdas[k] < lambdas[k - 1])) throw ConfigError("lambda grid must be strictly decreasing");
  const auto s = standardize(design, options.standardize);
  const RiskSets rs(times, events);
  auto path = run_path(s, rs, lambdas, options);
  ElasticNetPath out;
  out.alpha = options.alpha;
  out.columns = s.columns;
  out.lambda_grid.assign(lambdas.begin(), lambdas.end());
  out.coef_per_lambda = std::move(path.coef_orig);
  out.objective_trace = std::move(path.traces);
  out.selected = lambdas.empty() ? 0 : lambdas.size() - 1;
  out.lambda_selected = lambdas.empty() ? 0.0 : lambdas.back();
  const Eigen::MatrixXd x = gather_columns(design, out.columns);
  out.fit = make_cox_fit(x, out.columns, times, events,
                         out.coef_per_lambda.empty() ? Eigen::VectorXd::Zero(x.cols()) : out.coef_per_lambda.back());
  return out;
}

ElasticNetPath fit_coxnet(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                          const CoxnetOptions& options) {
  check_inputs(design, times, events, options);
  const auto s = standardize(design, options.standardize);
  const RiskSets rs(times, events);
  const double lmax = lambda_max_std(s.x, rs, options.alpha);

  if (options.fixed_lambda) {
    // Warm-started descent from lambda_max to the requested value.
    std::vector<double> grid;
    const double target = *options.fixed_lambda;
    if (target < lmax) {
      const double ratio = target > 0.0 ? target / lmax : 1e-3;
      grid = make_grid(lmax, 20, ratio);
      grid.pop_back();
    }
    grid.push_back(target);
    return coxnet_path(design, times, events, grid, options);
  }

  std::vector<double> grid = make_grid(lmax, options.n_lambda, options.lambda_min_ratio);
  if (options.append_zero_lambda) grid.push_back(0.0);

  ElasticNetPath out;
  out.alpha = options.alpha;
  out.columns = s.columns;
  out.lambda_grid = grid;
  auto full = run_path(s, rs, grid, options);
  out.coef_per_lambda = std::move(full.coef_orig);
  out.objective_trace = std::move(full.traces);

  const Eigen::MatrixXd x_all = gather_columns(design, out.columns);
  const std::size_t n = times.size();
  const int k = options.n_folds;
  if (k >= 2) {
    const auto fold = event_stratified_folds(events, k, options.seed);
    std::vector<double> err_sum(grid.size(), 0.0);
    std::vector<std::vector<double>> per_fold(static_cast<std::size_t>(k), std::vector<double>(grid.size(), 0.0));
    std::vector<double> fold_events(static_cast<std::size_t>(k), 0.0);
    for (int f = 0; f < k; ++f) {
      std::vector<std::size_t> train;
      for (std::size_t i = 0; i < n; ++i)
        if (fold[i] != f) train.push_back(i);
        else fold_events[static_cast<std::size_t>(f)] += events[i];
      std::vector<double> tt;
      std::vector<int> te;
      for (auto i : train) {
        tt.push_back(times[i]);
        te.push_back(events[i]);
      }
      if (std::none_of(te.begin(), te.end(), [](int e) { return e != 0; }))
        throw DataError("penalized Cox CV: a training fold has no events; reduce the fold count");
      const DesignMatrix dtrain = design.select_rows(train).select_columns(out.columns);
      // Same column set as the full fit; a column constant within the fold keeps coefficient 0.
      auto sf = standardize(dtrain, options.standardize);
      const RiskSets rs_train(tt, te);
      auto fp = run_path(sf, rs_train, grid, options);
      const Eigen::MatrixXd x_train = gather_columns(dtrain, out.columns);
      for (std::size_t l = 0; l < grid.size(); ++l) {
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out.columns.size()));
        for (std::size_t c = 0; c < sf.columns.size(); ++c) beta[sf.source[c]] = fp.coef_orig[l][static_cast<Eigen::Index>(c)];
        const double ll_full = rs.loglik(x_all * beta);
        const double ll_train = rs_train.loglik(x_train * beta);
        const double dev = -2.0 * (ll_full - ll_train);
        per_fold[static_cast<std::size_t>(f)][l] = dev;
        err_sum[l] += dev;
      }
    }
    const double total_events = static_cast<double>(rs.n_events());
    out.cv_error.resize(grid.size());
    out.cv_se.resize(grid.size());
    for (std::size_t l = 0; l < grid.size(); ++l) {
      const double mean = err_sum[l] / total_events;
      double var = 0.0;
      for (int f = 0; f < k; ++f) {
        const double fe = fold_events[static_cast<std::size_t>(f)];
        if (fe <= 0.0) continue;
        const double r = per_fold[static_cast<std::size_t>(f)][l] / fe - mean;
        var += fe * r * r;
      }
      var /= total_events;
      out.cv_error[l] = mean;
      out.cv_se[l] = std::sqrt(var / (k - 1));
    }
    out.selected = static_cast<std::size_t>(std::min_element(out.cv_error.begin(), out.cv_error.end()) -
                                            out.cv_error.begin());
  } else {
    out.selected = grid.size() - 1;
  }
  out.lambda_selected = grid[out.selected];
  out.fit = make_cox_fit(x_all, out.columns, times, events, out.coef_per_lambda[out.selected]);
  return out;
}

}  // namespace dynpred
