#include "dynpred/spls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "dynpred/error.hpp"
#include "dynpred/folds.hpp"
#include "dynpred/log.hpp"
#include "dynpred/metrics.hpp"

namespace dynpred {

std::string to_string(SparsityMode mode) {
  switch (mode) {
    case SparsityMode::None: return "none";
    case SparsityMode::Max: return "max";
    case SparsityMode::Grid: return "grid";
  }
  return "none";
}

std::vector<double> martingale_residuals(std::span<const double> times, std::span<const int> events) {
  if (std::none_of(events.begin(), events.end(), [](int e) { return e != 0; }))
    throw DataError("deviance residuals need at least one event");
  const StepFunction na = nelson_aalen(times, events);
  std::vector<double> m(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) m[i] = events[i] - na(times[i]);
  return m;
}

std::vector<double> deviance_residuals(std::span<const double> times, std::span<const int> events) {
  const auto m = martingale_residuals(times, events);
  std::vector<double> d(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    double inner = m[i];
    if (events[i]) {
      const double chf = 1.0 - m[i];
      if (!(chf > 0.0)) throw NumericalError("non-positive cumulative hazard at an event time");
      inner += std::log(chf);
    }
    const double sign = m[i] > 0.0 ? 1.0 : (m[i] < 0.0 ? -1.0 : 0.0);
    d[i] = sign * std::sqrt(std::max(0.0, -2.0 * inner));
  }
  return d;
}

PlsComponents fit_spls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int n_components, double eta) {
  if (n_components < 1) throw ConfigError("sPLS needs at least one component");
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("sPLS sparsity must be in [0, 1)");
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd xc = x;
  const Eigen::VectorXd yc = y.array() - y.mean();
  std::vector<Eigen::VectorXd> ws, ps, ts;
  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  for (int c = 0; c < n_components; ++c) {
    const Eigen::VectorXd z = xc.transpose() * yc;
    const double zmax = p > 0 ? z.cwiseAbs().maxCoeff() : 0.0;
    if (!(zmax > 1e-12 * scale * std::max(1.0, yc.norm()))) {
      warn("sPLS stopped at " + std::to_string(c) + " components: no remaining covariance with the response");
      break;
    }
    const double thr = eta * zmax;
    Eigen::VectorXd w(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double a = std::abs(z[j]) - thr;
      w[j] = a > 0.0 ? std::copysign(a, z[j]) : 0.0;
    }
    const double wn = w.norm();
    if (!(wn > 0.0)) {
      warn("sPLS stopped at " + std::to_string(c) + " components: direction vanished after thresholding");
      break;
    }
    w /= wn;
    const Eigen::VectorXd t = xc * w;
    const double tt = t.squaredNorm();
    if (!(tt > 1e-20 * static_cast<double>(n) * scale * scale)) {
      warn("sPLS stopped at " + std::to_string(c) + " components: score vector vanished");
      break;
    }
    const Eigen::VectorXd pl = xc.transpose() * t / tt;
    xc.noalias() -= t * pl.transpose();
    ws.push_back(w);
    ps.push_back(pl);
    ts.push_back(t);
  }
  if (ws.empty()) throw NumericalError("sPLS produced no component");
  const auto c = static_cast<Eigen::Index>(ws.size());
  PlsComponents out;
  out.weights.resize(p, c);
  out.loadings.resize(p, c);
  out.scores.resize(n, c);
  for (Eigen::Index k = 0; k < c; ++k) {
    out.weights.col(k) = ws[static_cast<std::size_t>(k)];
    out.loadings.col(k) = ps[static_cast<std::size_t>(k)];
    out.scores.col(k) = ts[static_cast<std::size_t>(k)];
  }
  // P'W is unit upper triangular, so the rotation always exists.
  const Eigen::MatrixXd ptw = out.loadings.transpose() * out.weights;
  out.rotation = out.weights * ptw.inverse();
  return out;
}

namespace {

struct Standardized {
  std::vector<std::string> columns;
  Eigen::VectorXd means, sds;
};

Standardized standardization(const DesignMatrix& d) {
  Standardized s;
  const Eigen::Index n = d.rows();
  std::vector<double> m, sd;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const double mu = d.values.col(j).mean();
    const double v = n > 1 ? (d.values.col(j).array() - mu).square().sum() / static_cast<double>(n - 1) : 0.0;
    const double sdev = std::sqrt(v);
    if (!(sdev > 1e-12 * std::max(1.0, std::abs(mu)))) continue;
    s.columns.push_back(d.column_names[static_cast<std::size_t>(j)]);
    m.push_back(mu);
    sd.push_back(sdev);
  }
  s.means = Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.sds = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

Eigen::MatrixXd standardized_matrix(const DesignMatrix& d, const Standardized& s) {
  Eigen::MatrixXd x = gather_columns(d, s.columns);
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) = (x.col(j).array() - s.means[j]) / s.sds[j];
  return x;
}

std::vector<std::string> component_names(Eigen::Index c) {
  std::vector<std::string> names;
  for (Eigen::Index k = 0; k < c; ++k) names.push_back("comp" + std::to_string(k + 1));
  return names;
}

// Training-fold fit used by CV and the final model.
struct Trained {
  Standardized std;
  PlsComponents comps;
};

Trained train(const DesignMatrix& d, std::span<const double> times, std::span<const int> events, int max_c,
              double eta) {
  Trained t;
  t.std = standardization(d);
  if (t.std.columns.empty()) throw DataError("sPLS-DR: every design column has zero variance");
  const Eigen::MatrixXd x = standardized_matrix(d, t.std);
  const auto dev = deviance_residuals(times, events);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(dev.data(), static_cast<Eigen::Index>(dev.size()));
  const int cap = static_cast<int>(std::min<Eigen::Index>(max_c, std::min(x.cols(), x.rows() - 1)));
  t.comps = fit_spls(x, y, std::max(1, cap), eta);
  return t;
}

}  // namespace

Eigen::MatrixXd SplsDrFit::scores(const DesignMatrix& design) const {
  Eigen::MatrixXd x = gather_columns(design, columns);
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) = (x.col(j).array() - means[j]) / sds[j];
  return x * components.rotation;
}

SplsDrFit fit_spls_dr(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                      const SplsOptions& options) {
  if (options.max_components < 1) throw ConfigError("sPLS-DR max_components must be at least 1");
  if (static_cast<std::size_t>(design.rows()) != times.size() || times.size() != events.size())
    throw std::invalid_argument("fit_spls_dr: design rows, times and events differ in length");

  std::vector<double> etas;
  switch (options.mode) {
    case SparsityMode::None: etas = {0.0}; break;
    case SparsityMode::Max: etas = {0.99}; break;
    case SparsityMode::Grid: etas = options.eta_grid; break;
  }
  if (options.fixed_eta) etas = {*options.fixed_eta};

  SplsDrFit out;
  int best_c = options.max_components;
  double best_eta = etas.front();
  if (options.fixed_components) {
    best_c = *options.fixed_components;
  } else {
    const std::size_t n = times.size();
    if (options.n_folds < 2) throw ConfigError("sPLS-DR CV needs at least 2 folds");
    const auto fold = event_stratified_folds(events, options.n_folds, options.seed);
    const RiskSets rs_full(times, events);
    const double inf = std::numeric_limits<double>::infinity();
    out.eta_candidates = etas;
    out.cv_error.assign(etas.size(), std::vector<double>(static_cast<std::size_t>(options.max_components), 0.0));
    for (std::size_t e = 0; e < etas.size(); ++e) {
      for (int f = 0; f < options.n_folds; ++f) {
        std::vector<std::size_t> tr;
        std::vector<double> tt;
        std::vector<int> te;
        for (std::size_t i = 0; i < n; ++i)
          if (fold[i] != f) {
            tr.push_back(i);
            tt.push_back(times[i]);
            te.push_back(events[i]);
          }
        auto& row = out.cv_error[e];
        Trained t;
        try {
          const DesignMatrix dtr = design.select_rows(tr);
          t = train(dtr, tt, te, options.max_components, etas[e]);
        } catch (const Error&) {
          std::fill(row.begin(), row.end(), inf);
          continue;
        }
        const Eigen::MatrixXd s_full = standardized_matrix(design, t.std) * t.comps.rotation;
        const Eigen::MatrixXd& s_tr = t.comps.scores;
        const RiskSets rs_tr(tt, te);
        for (int c = 1; c <= options.max_components; ++c) {
          if (c > t.comps.n_components()) {
            row[static_cast<std::size_t>(c - 1)] = inf;
            continue;
          }
          try {
            const auto names = component_names(c);
            const CoxFit cf = fit_cox(s_tr.leftCols(c), names, tt, te);
            const double ll_full = rs_full.loglik(s_full.leftCols(c) * cf.coef);
            const double ll_tr = rs_tr.loglik(s_tr.leftCols(c) * cf.coef);
            row[static_cast<std::size_t>(c - 1)] += -2.0 * (ll_full - ll_tr);
          } catch (const Error&) {
            row[static_cast<std::size_t>(c - 1)] = inf;
          }
        }
      }
    }
    double best = inf;
    for (std::size_t e = 0; e < etas.size(); ++e)
      for (int c = 1; c <= options.max_components; ++c) {
        const double v = out.cv_error[e][static_cast<std::size_t>(c - 1)];
        if (v < best) {
          best = v;
          best_c = c;
          best_eta = etas[e];
        }
      }
    if (!std::isfinite(best)) {
      best_c = 1;
      warn("sPLS-DR: no finite CV deviance, falling back to one component");
    }
  }

  const Trained t = train(design, times, events, best_c, best_eta);
  out.columns = t.std.columns;
  out.means = t.std.means;
  out.sds = t.std.sds;
  out.eta = best_eta;
  out.components = t.comps;
  out.inner = fit_cox(t.comps.scores, component_names(t.comps.n_components()), times, events);
  return out;
}

std::vector<double> predict_spls_probability(const SplsDrFit& fit, const DesignMatrix& design, double t_hor) {
  const Eigen::MatrixXd s = fit.scores(design);
  std::vector<double> out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    out[static_cast<std::size_t>(i)] = predict_cox_probability(fit.inner, s.row(i).transpose(), t_hor);
  return out;
}

}  // namespace dynpred
