#include "dynpred/mixed_model.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "dynpred/error.hpp"
#include "dynpred/optim.hpp"

namespace dynpred {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct SubjectDesign {
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;
  Eigen::VectorXd y;
};

std::vector<SubjectDesign> build_designs(std::span<const MarkerSeries> series, const MixedModelSpec& spec) {
  std::vector<SubjectDesign> out;
  for (const auto& s : series) {
    if (s.empty()) continue;
    SubjectDesign d;
    const auto n = static_cast<Eigen::Index>(s.size());
    d.x.resize(n, static_cast<Eigen::Index>(spec.fixed.size()));
    d.z.resize(n, static_cast<Eigen::Index>(spec.random.size()));
    d.y.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double t = s[static_cast<std::size_t>(j)].time - spec.time_origin;
      d.x.row(j) = basis_row(spec.fixed, t).transpose();
      d.z.row(j) = basis_row(spec.random, t).transpose();
      d.y[j] = s[static_cast<std::size_t>(j)].value;
    }
    out.push_back(std::move(d));
  }
  return out;
}

void check_fixed_design(const std::vector<SubjectDesign>& designs, Eigen::Index p) {
  if (designs.empty()) throw DataError("mixed model: no subject has an observation");
  Eigen::Index rows = 0;
  for (const auto& d : designs) rows += d.x.rows();
  Eigen::MatrixXd stacked(rows, p);
  Eigen::Index r = 0;
  for (const auto& d : designs) {
    stacked.middleRows(r, d.x.rows()) = d.x;
    r += d.x.rows();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked);
  qr.setThreshold(1e-10);
  if (qr.rank() < p)
    throw DataError("mixed model: pooled fixed-effect design is rank deficient (rank " +
                    std::to_string(qr.rank()) + " < " + std::to_string(p) + ")");
}

Eigen::Index vech_size(Eigen::Index q) { return q * (q + 1) / 2; }

Eigen::MatrixXd unpack_lower(const Eigen::VectorXd& theta, Eigen::Index offset, Eigen::Index q) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(q, q);
  Eigen::Index k = offset;
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = theta[k++];
  return l;
}

void pack_lower(const Eigen::MatrixXd& l, Eigen::VectorXd& theta, Eigen::Index offset) {
  Eigen::Index k = offset;
  for (Eigen::Index i = 0; i < l.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) theta[k++] = l(i, j);
}

struct LmmEval {
  double loglik = 0.0;
  Eigen::VectorXd beta;
  Eigen::MatrixXd grad_b;   // d loglik / d B (symmetric)
  double grad_sigma2 = 0.0;
};

// Marginal log-likelihood with beta profiled out by generalized least squares.
LmmEval profile_lmm(const std::vector<SubjectDesign>& designs, const Eigen::MatrixXd& b, double sigma2,
                    bool want_gradient) {
  const Eigen::Index p = designs.front().x.cols();
  const Eigen::Index q = designs.front().z.cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;
  factors.reserve(designs.size());
  for (const auto& d : designs) {
    const Eigen::Index n = d.y.size();
    Eigen::MatrixXd v = d.z * b * d.z.transpose();
    v.diagonal().array() += sigma2;
    factors.emplace_back(v);
    if (factors.back().info() != Eigen::Success) throw NumericalError("marginal covariance not positive definite");
    const Eigen::MatrixXd vinv_x = factors.back().solve(d.x);
    a.noalias() += d.x.transpose() * vinv_x;
    c.noalias() += vinv_x.transpose() * d.y;
    (void)n;
  }
  LmmEval out;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
    throw NumericalError("generalized least-squares system is singular");
  out.beta = ldlt.solve(c);
  out.grad_b = Eigen::MatrixXd::Zero(q, q);

  for (std::size_t i = 0; i < designs.size(); ++i) {
    const auto& d = designs[i];
    const auto& llt = factors[i];
    const Eigen::Index n = d.y.size();
    const Eigen::VectorXd r = d.y - d.x * out.beta;
    const Eigen::VectorXd vr = llt.solve(r);
    const Eigen::MatrixXd lmat = llt.matrixL();
    const double logdet = 2.0 * lmat.diagonal().array().log().sum();
    out.loglik += -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + r.dot(vr));
    if (want_gradient) {
      const Eigen::MatrixXd vinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
      const Eigen::MatrixXd m = vr * vr.transpose() - vinv;
      if (q > 0) out.grad_b.noalias() += 0.5 * d.z.transpose() * m * d.z;
      out.grad_sigma2 += 0.5 * m.trace();
    }
  }
  return out;
}

double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }
double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// Posterior mode of u (b = L u, u ~ N(0, I)) and the subject's Laplace contribution.
double laplace_subject(const SubjectDesign& d, const Eigen::VectorXd& beta, const Eigen::MatrixXd& chol,
                       Eigen::VectorXd& u) {
  const Eigen::Index q = chol.cols();
  const Eigen::VectorXd offset = d.x * beta;
  const Eigen::MatrixXd zl = d.z * chol;
  u = Eigen::VectorXd::Zero(q);

  auto objective = [&](const Eigen::VectorXd& uu) {
    const Eigen::VectorXd eta = offset + zl * uu;
    double h = -0.5 * uu.squaredNorm();
    for (Eigen::Index j = 0; j < eta.size(); ++j) h += d.y[j] * eta[j] - softplus(eta[j]);
    return h;
  };

  double h = objective(u);
  Eigen::MatrixXd hess(q, q);
  for (int it = 0; it < 100 && q > 0; ++it) {
    const Eigen::VectorXd eta = offset + zl * u;
    Eigen::VectorXd resid(eta.size()), w(eta.size());
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
      const double mu = logistic(eta[j]);
      resid[j] = d.y[j] - mu;
      w[j] = mu * (1.0 - mu);
    }
    const Eigen::VectorXd g = zl.transpose() * resid - u;
    hess = zl.transpose() * w.asDiagonal() * zl;
    hess.diagonal().array() += 1.0;
    const Eigen::VectorXd step = hess.llt().solve(g);
    double t = 1.0;
    Eigen::VectorXd u_new = u + step;
    double h_new = objective(u_new);
    while (h_new < h && t > 1e-10) {
      t *= 0.5;
      u_new = u + t * step;
      h_new = objective(u_new);
    }
    const double move = (u_new - u).cwiseAbs().maxCoeff();
    u = u_new;
    h = std::max(h, h_new);
    if (move < 1e-12) break;
  }
  if (q == 0) return h;
  h = objective(u);

  const Eigen::VectorXd eta = offset + zl * u;
  Eigen::VectorXd w(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const double mu = logistic(eta[j]);
    w[j] = mu * (1.0 - mu);
  }
  hess = zl.transpose() * w.asDiagonal() * zl;
  hess.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  const Eigen::MatrixXd lm = llt.matrixL();
  return h - lm.diagonal().array().log().sum();
}

// Plain logistic regression by Newton-Raphson; detects separation.
Eigen::VectorXd logistic_regression(const std::vector<SubjectDesign>& designs, Eigen::Index p) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < 100; ++it) {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(p);
    for (const auto& d : designs) {
      const Eigen::VectorXd eta = d.x * beta;
      for (Eigen::Index j = 0; j < eta.size(); ++j) {
        const double mu = logistic(eta[j]);
        score.noalias() += (d.y[j] - mu) * d.x.row(j).transpose();
        info.noalias() += mu * (1.0 - mu) * d.x.row(j).transpose() * d.x.row(j);
      }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const Eigen::VectorXd step = ldlt.solve(score);
    beta += step;
    if (!beta.allFinite() || beta.cwiseAbs().maxCoeff() > 30.0)
      throw DataError("logistic mixed model: complete separation in the pooled fixed-effect design");
    if (step.cwiseAbs().maxCoeff() < 1e-10) return beta;
  }
  throw DataError("logistic mixed model: complete separation in the pooled fixed-effect design");
}

void check_bases(const MixedModelSpec& spec) {
  spec.fixed.validate();
  spec.random.validate();
  if (spec.fixed.size() == 0) throw ConfigError("mixed model needs at least one fixed effect");
}

}  // namespace

std::string to_string(Link link) { return link == Link::Logit ? "logit" : "identity"; }

Link parse_link(const std::string& s) {
  if (s == "identity") return Link::Identity;
  if (s == "logit") return Link::Logit;
  throw ConfigError("unknown link '" + s + "'");
}

double MixedModelFit::linear_predictor(double t, const Eigen::VectorXd& b, int order) const {
  const double tc = t - time_origin;
  double v = basis_row(basis_fixed, tc, order).dot(beta);
  if (b.size() > 0) v += basis_row(basis_random, tc, order).dot(b);
  return v;
}

double lmm_loglik(std::span<const MarkerSeries> series, const MixedModelSpec& spec, const Eigen::VectorXd& beta,
                  const Eigen::MatrixXd& cov_b, double sigma2) {
  const auto designs = build_designs(series, spec);
  double ll = 0.0;
  for (const auto& d : designs) {
    const Eigen::Index n = d.y.size();
    Eigen::MatrixXd v = d.z * cov_b * d.z.transpose();
    v.diagonal().array() += sigma2;
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) throw NumericalError("marginal covariance not positive definite");
    const Eigen::VectorXd r = d.y - d.x * beta;
    const Eigen::MatrixXd lm = llt.matrixL();
    ll += -0.5 * (static_cast<double>(n) * kLog2Pi + 2.0 * lm.diagonal().array().log().sum() + r.dot(llt.solve(r)));
  }
  return ll;
}

MixedModelFit fit_lmm(std::span<const MarkerSeries> series, const MixedModelSpec& spec, const std::string& marker) {
  check_bases(spec);
  const auto designs = build_designs(series, spec);
  const auto p = static_cast<Eigen::Index>(spec.fixed.size());
  const auto q = static_cast<Eigen::Index>(spec.random.size());
  check_fixed_design(designs, p);

  // OLS start.
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  double n_obs = 0.0, sum_y = 0.0, sum_y2 = 0.0;
  for (const auto& d : designs) {
    xtx.noalias() += d.x.transpose() * d.x;
    xty.noalias() += d.x.transpose() * d.y;
    n_obs += static_cast<double>(d.y.size());
    sum_y += d.y.sum();
    sum_y2 += d.y.squaredNorm();
  }
  const Eigen::VectorXd beta_ols = xtx.ldlt().solve(xty);
  double rss = 0.0;
  for (const auto& d : designs) rss += (d.y - d.x * beta_ols).squaredNorm();
  const double var_y = std::max(sum_y2 / n_obs - (sum_y / n_obs) * (sum_y / n_obs), 0.0);
  const double s2 = std::max(rss / n_obs, 1e-6 * std::max(var_y, 1e-6));
  const double log_s2_floor = std::log(1e-8 * std::max(var_y, 1e-6));

  const bool estimate_b = q > 0 && !spec.force_zero_random;
  const Eigen::Index nl = estimate_b ? vech_size(q) : 0;
  Eigen::VectorXd theta(nl + 1);
  if (estimate_b) {
    Eigen::MatrixXd l0 = Eigen::MatrixXd::Zero(q, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      double mz2 = 0.0;
      for (const auto& d : designs) mz2 += d.z.col(j).squaredNorm();
      mz2 /= n_obs;
      l0(j, j) = std::sqrt(0.5 * s2 / std::max(mz2, 1e-8));
    }
    pack_lower(l0, theta, 0);
  }
  theta[nl] = std::log(0.5 * s2);

  auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* grad) {
    const Eigen::MatrixXd l = estimate_b ? unpack_lower(th, 0, q) : Eigen::MatrixXd::Zero(q, q);
    const double sigma2 = std::exp(th[nl]);
    LmmEval e;
    try {
      e = profile_lmm(designs, l * l.transpose(), sigma2, grad != nullptr);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
    if (grad) {
      grad->resize(th.size());
      if (estimate_b) {
        const Eigen::MatrixXd gl = 2.0 * e.grad_b * l;
        Eigen::VectorXd packed(th.size());
        pack_lower(gl, packed, 0);
        grad->head(nl) = -packed.head(nl);
      }
      (*grad)[nl] = -e.grad_sigma2 * sigma2;
    }
    return -e.loglik;
  };

  OptimOptions opts;
  opts.max_iterations = spec.max_iterations;
  opts.lower = Eigen::VectorXd::Constant(theta.size(), -std::numeric_limits<double>::infinity());
  opts.lower[nl] = log_s2_floor;
  theta[nl] = std::max(theta[nl], log_s2_floor);
  const auto res = minimize_bfgs(objective, theta, opts);
  if (!res.converged)
    throw ConvergenceError("linear mixed model" + (marker.empty() ? std::string() : " for marker '" + marker + "'") +
                               " did not converge after " + std::to_string(res.iterations) +
                               " iterations (gradient norm " + std::to_string(res.gradient_norm) + ")",
                           res.x, res.gradient_norm);

  MixedModelFit fit;
  fit.marker = marker;
  fit.link = Link::Identity;
  fit.chol_b = estimate_b ? unpack_lower(res.x, 0, q) : Eigen::MatrixXd::Zero(q, q);
  // Canonical sign: non-negative Cholesky diagonal (B is invariant to column sign flips).
  for (Eigen::Index j = 0; j < q; ++j)
    if (fit.chol_b(j, j) < 0.0) fit.chol_b.col(j) *= -1.0;
  fit.sigma2 = std::exp(res.x[nl]);
  const auto e = profile_lmm(designs, fit.cov_b(), fit.sigma2, false);
  fit.beta = e.beta;
  fit.loglik = e.loglik;
  fit.basis_fixed = spec.fixed;
  fit.basis_random = spec.random;
  fit.time_origin = spec.time_origin;
  fit.iterations = res.iterations;
  return fit;
}

double glmm_laplace_loglik(std::span<const MarkerSeries> series, const MixedModelSpec& spec,
                           const Eigen::VectorXd& beta, const Eigen::MatrixXd& chol_b) {
  const auto designs = build_designs(series, spec);
  double ll = 0.0;
  Eigen::VectorXd u;
  for (const auto& d : designs) ll += laplace_subject(d, beta, chol_b, u);
  return ll;
}

MixedModelFit fit_glmm_logistic(std::span<const MarkerSeries> series, const MixedModelSpec& spec,
                                const std::string& marker) {
  check_bases(spec);
  const auto designs = build_designs(series, spec);
  const auto p = static_cast<Eigen::Index>(spec.fixed.size());
  const auto q = static_cast<Eigen::Index>(spec.random.size());
  if (designs.empty()) throw DataError("logistic mixed model: no subject has an observation");
  double n1 = 0.0, n = 0.0;
  for (const auto& d : designs) {
    for (Eigen::Index j = 0; j < d.y.size(); ++j)
      if (d.y[j] != 0.0 && d.y[j] != 1.0) throw DataError("logistic mixed model: outcome must be 0/1");
    n1 += d.y.sum();
    n += static_cast<double>(d.y.size());
  }
  if (n1 == 0.0 || n1 == n)
    throw DataError("logistic mixed model" + (marker.empty() ? std::string() : " for marker '" + marker + "'") +
                    ": complete separation (only one outcome class observed)");
  check_fixed_design(designs, p);
  const Eigen::VectorXd beta0 = logistic_regression(designs, p);

  const bool estimate_b = q > 0 && !spec.force_zero_random;
  const Eigen::Index nl = estimate_b ? vech_size(q) : 0;
  Eigen::VectorXd theta(p + nl);
  theta.head(p) = beta0;
  if (estimate_b) pack_lower(0.5 * Eigen::MatrixXd::Identity(q, q), theta, p);

  auto eval = [&](const Eigen::VectorXd& th) {
    const Eigen::MatrixXd l = estimate_b ? unpack_lower(th, p, q) : Eigen::MatrixXd::Zero(q, q);
    double ll = 0.0;
    Eigen::VectorXd u;
    for (const auto& d : designs) ll += laplace_subject(d, th.head(p), l, u);
    return -ll;
  };
  auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* grad) {
    const double v = eval(th);
    if (grad) *grad = numeric_gradient(eval, th, 1e-4);
    return v;
  };

  OptimOptions opts;
  opts.max_iterations = spec.max_iterations;
  const auto res = minimize_bfgs(objective, theta, opts);
  if (!res.converged)
    throw ConvergenceError("logistic mixed model" + (marker.empty() ? std::string() : " for marker '" + marker + "'") +
                               " did not converge after " + std::to_string(res.iterations) +
                               " iterations (gradient norm " + std::to_string(res.gradient_norm) + ")",
                           res.x, res.gradient_norm);

  MixedModelFit fit;
  fit.marker = marker;
  fit.link = Link::Logit;
  fit.beta = res.x.head(p);
  fit.chol_b = estimate_b ? unpack_lower(res.x, p, q) : Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index j = 0; j < q; ++j)
    if (fit.chol_b(j, j) < 0.0) fit.chol_b.col(j) *= -1.0;
  fit.sigma2 = 0.0;
  fit.loglik = -res.value;
  fit.basis_fixed = spec.fixed;
  fit.basis_random = spec.random;
  fit.time_origin = spec.time_origin;
  fit.iterations = res.iterations;
  return fit;
}

MixedModelFit fit_mixed_model(std::span<const MarkerSeries> series, MarkerNature nature, const MixedModelSpec& spec,
                              const std::string& marker) {
  return nature == MarkerNature::Binary ? fit_glmm_logistic(series, spec, marker) : fit_lmm(series, spec, marker);
}

Eigen::VectorXd predict_random_effects(const MixedModelFit& fit, const MarkerSeries& series) {
  const auto q = static_cast<Eigen::Index>(fit.basis_random.size());
  if (series.empty() || q == 0) return Eigen::VectorXd::Zero(q);
  MixedModelSpec spec;
  spec.fixed = fit.basis_fixed;
  spec.random = fit.basis_random;
  spec.time_origin = fit.time_origin;
  const auto designs = build_designs(std::span<const MarkerSeries>(&series, 1), spec);
  const auto& d = designs.front();
  if (fit.link == Link::Identity) {
    const Eigen::MatrixXd b = fit.cov_b();
    Eigen::MatrixXd v = d.z * b * d.z.transpose();
    v.diagonal().array() += fit.sigma2;
    const Eigen::VectorXd r = d.y - d.x * fit.beta;
    return b * d.z.transpose() * v.llt().solve(r);
  }
  Eigen::VectorXd u;
  laplace_subject(d, fit.beta, fit.chol_b, u);
  return fit.chol_b * u;
}

}  // namespace dynpred
