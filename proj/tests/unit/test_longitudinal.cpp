#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <dynpred/error.hpp>
#include <dynpred/mixed_model.hpp>
#include <dynpred/optim.hpp>
#include <dynpred/quadrature.hpp>
#include <dynpred/simulate.hpp>
#include <dynpred/spline.hpp>
#include <dynpred/summaries.hpp>

#include "../support/oracles.hpp"

using namespace dynpred;
using testing_support::adaptive_simpson;
using testing_support::mvn_logpdf;

namespace {

BasisSpec test_spline() { return BasisSpec::natural_spline({-3.0, -1.5, -0.5}, -4.0, 0.0); }

// Random-intercept (optionally random-slope) Gaussian data on visits -4..0.
std::vector<MarkerSeries> lmm_data(int n, double b0, double b1, double tau0, double tau1, double sigma,
                                   std::uint64_t seed, int visits = 5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<MarkerSeries> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    const double r0 = tau0 * z(rng), r1 = tau1 * z(rng);
    for (int v = 0; v < visits; ++v) {
      const double t = -4.0 + v + 0.1 * z(rng);
      s.push_back({t, b0 + r0 + (b1 + r1) * t + sigma * z(rng)});
    }
  }
  return out;
}

// Observed-information SE of a fixed effect by numeric differentiation of the marginal loglik.
double beta_se(const std::function<double(const Eigen::VectorXd&)>& ll, const Eigen::VectorXd& beta) {
  const Eigen::Index p = beta.size();
  Eigen::MatrixXd h(p, p);
  const double e = 1e-4;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      Eigen::VectorXd a = beta, b = beta, c = beta, d = beta;
      a[i] += e; a[j] += e;
      b[i] += e; b[j] -= e;
      c[i] -= e; c[j] += e;
      d[i] -= e; d[j] -= e;
      h(i, j) = -(ll(a) - ll(b) - ll(c) + ll(d)) / (4 * e * e);
    }
  return std::sqrt(h.inverse()(0, 0));
}

}  // namespace

TEST(Spline, LinearPolynomialRow) {
  const auto r = basis_row(BasisSpec::polynomial(1), 2.0);
  ASSERT_EQ(r.size(), 2);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  EXPECT_DOUBLE_EQ(r[1], 2.0);
}

TEST(Spline, NaturalAtBoundary) {
  const auto s = test_spline();
  for (double t : {-4.0, 0.0, -6.0, 2.0}) EXPECT_NEAR(basis_row(s, t, 2).cwiseAbs().maxCoeff(), 0.0, 1e-12) << t;
}

TEST(Spline, DerivativeMatchesFiniteDifferences) {
  const auto s = test_spline();
  const double h = 1e-5;
  for (int k = 0; k < 17; ++k) {
    const double t = -5.0 + 6.0 * k / 16.0 + 0.0123;
    const auto both = natural_spline_basis(t, s);
    const Eigen::VectorXd fd = (basis_row(s, t + h) - basis_row(s, t - h)) / (2 * h);
    EXPECT_LT((both.first_derivative - fd).cwiseAbs().maxCoeff(), 1e-6) << t;
    EXPECT_LT((both.value - basis_row(s, t)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Spline, LinearBeyondBoundary) {
  const auto s = test_spline();
  const Eigen::VectorXd a = basis_row(s, 1.0), b = basis_row(s, 2.0), c = basis_row(s, 3.0);
  EXPECT_LT((a - 2 * b + c).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Spline, InvalidKnots) {
  EXPECT_THROW(BasisSpec::natural_spline({-1.0, -2.0}, -4.0, 0.0), ConfigError);
  EXPECT_THROW(BasisSpec::natural_spline({-5.0}, -4.0, 0.0), ConfigError);
}

TEST(Quadrature, MatchesAdaptiveOracle) {
  auto f = [](double x) { return std::exp(-x * x) * std::cos(3 * x) + 0.1 * x * x * x; };
  const double q = integrate(f, -2.0, 1.5);
  const double r = adaptive_simpson(f, -2.0, 1.5, 1e-12);
  EXPECT_NEAR(q, r, 1e-8);
}

TEST(Quadrature, ExactForPolynomials) {
  EXPECT_NEAR(integrate([](double x) { return 3 * x * x; }, 0.0, 2.0), 8.0, 1e-13);
  const auto& rule = gauss_legendre(64);
  double sum = 0.0;
  for (double w : rule.weights) sum += w;
  EXPECT_NEAR(sum, 2.0, 1e-13);
}

TEST(Optim, QuadraticBowlWithBound) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = Eigen::Vector2d(2 * (x[0] - 1), 20 * (x[1] + 2));
    return (x[0] - 1) * (x[0] - 1) + 10 * (x[1] + 2) * (x[1] + 2);
  };
  OptimOptions o;
  o.lower = Eigen::Vector2d(-1e9, -1.0);
  const auto r = minimize_bfgs(f, Eigen::Vector2d(5, 5), o);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 1.0, 1e-5);
  EXPECT_DOUBLE_EQ(r.x[1], -1.0);
}

TEST(Lmm, LoglikMatchesDenseOracle) {
  const auto data = lmm_data(6, 1.0, 0.5, 0.8, 0.3, 0.4, 3);
  MixedModelSpec spec;  // linear fixed and random
  spec.fixed = test_spline();
  Eigen::VectorXd beta(spec.fixed.size());
  beta << 0.5, -0.2, 0.3, 0.1, -0.4;
  Eigen::Matrix2d cov;
  cov << 0.6, 0.1, 0.1, 0.2;
  const double s2 = 0.3;
  double oracle = 0.0;
  for (const auto& s : data) {
    const auto n = static_cast<Eigen::Index>(s.size());
    Eigen::VectorXd y(n), mean(n);
    Eigen::MatrixXd z(n, 2);
    for (Eigen::Index j = 0; j < n; ++j) {
      y[j] = s[static_cast<std::size_t>(j)].value;
      const double t = s[static_cast<std::size_t>(j)].time;
      mean[j] = basis_row(spec.fixed, t).dot(beta);
      z.row(j) << 1.0, t;
    }
    oracle += mvn_logpdf(y, mean, z * cov * z.transpose() + s2 * Eigen::MatrixXd::Identity(n, n));
  }
  EXPECT_NEAR(lmm_loglik(data, spec, beta, cov, s2), oracle, 1e-8);
}

TEST(Lmm, RandomInterceptRecoversBeta) {
  const double b0 = 2.0, b1 = -0.7;
  const auto data = lmm_data(200, b0, b1, 1.0, 0.0, 0.5, 11);
  MixedModelSpec spec;
  spec.random = BasisSpec::polynomial(0);
  const auto fit = fit_lmm(data, spec, "y");
  auto ll = [&](const Eigen::VectorXd& b) { return lmm_loglik(data, spec, b, fit.cov_b(), fit.sigma2); };
  const double se0 = beta_se(ll, fit.beta);
  Eigen::VectorXd swapped(2);
  swapped << fit.beta[1], fit.beta[0];
  auto ll_sw = [&](const Eigen::VectorXd& b) {
    return lmm_loglik(data, spec, Eigen::Vector2d(b[1], b[0]), fit.cov_b(), fit.sigma2);
  };
  const double se1 = beta_se(ll_sw, swapped);
  EXPECT_LT(std::abs(fit.beta[0] - b0), 3 * se0);
  EXPECT_LT(std::abs(fit.beta[1] - b1), 3 * se1);
  // Likelihood dominance over the generating parameters.
  Eigen::MatrixXd cov_true(1, 1);
  cov_true << 1.0;
  EXPECT_GE(fit.loglik, lmm_loglik(data, spec, Eigen::Vector2d(b0, b1), cov_true, 0.25) - 1e-8);
  EXPECT_NEAR(fit.loglik, lmm_loglik(data, spec, fit.beta, fit.cov_b(), fit.sigma2), 1e-8);
}

TEST(Lmm, SingleConstantSubject) {
  std::vector<MarkerSeries> data{{{-3, 2.5}, {-2, 2.5}, {-1, 2.5}, {0, 2.5}}};
  MixedModelSpec spec;
  spec.fixed = BasisSpec::polynomial(0);
  spec.random = BasisSpec::polynomial(0);
  const auto fit = fit_lmm(data, spec);
  EXPECT_NEAR(fit.beta[0], 2.5, 1e-8);
  EXPECT_LT(fit.sigma2, 1e-6);
}

TEST(Blup, HandComputedRandomIntercept) {
  MixedModelFit fit;
  fit.link = Link::Identity;
  fit.basis_fixed = BasisSpec::polynomial(0);
  fit.basis_random = BasisSpec::polynomial(0);
  fit.beta = Eigen::VectorXd::Constant(1, 1.0);
  fit.chol_b = Eigen::MatrixXd::Constant(1, 1, std::sqrt(2.0));
  fit.sigma2 = 0.5;
  const MarkerSeries s{{0.0, 3.0}, {1.0, 2.0}};
  // V = [[2.5, 2], [2, 2.5]]; b = B 1' V^{-1} (y - 1) = 2 * (2 + 1) / (0.5 + 2 * 2) = 4/3
  const auto b = predict_random_effects(fit, s);
  EXPECT_NEAR(b[0], 4.0 / 3.0, 1e-10);
  EXPECT_EQ(predict_random_effects(fit, MarkerSeries{}).size(), 1);
  EXPECT_EQ(predict_random_effects(fit, MarkerSeries{})[0], 0.0);
  fit.sigma2 = 1e12;
  EXPECT_NEAR(predict_random_effects(fit, s)[0], 0.0, 1e-6);
}

TEST(Blup, DoublingResidualsDoublesPrediction) {
  const auto data = lmm_data(50, 1.0, 0.2, 0.7, 0.2, 0.3, 5);
  const auto fit = fit_lmm(data, MixedModelSpec{});
  MarkerSeries s = data[3], s2 = data[3];
  for (auto& o : s2) o.value = 2 * o.value - fit.linear_predictor(o.time, Eigen::VectorXd::Zero(2));
  const auto b1 = predict_random_effects(fit, s), b2 = predict_random_effects(fit, s2);
  EXPECT_LT((b2 - 2 * b1).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Blup, PopulationMeanNearZero) {
  const auto data = lmm_data(300, 1.0, 0.2, 0.7, 0.2, 0.3, 8);
  const auto fit = fit_lmm(data, MixedModelSpec{});
  Eigen::MatrixXd b(300, 2);
  for (int i = 0; i < 300; ++i) b.row(i) = predict_random_effects(fit, data[static_cast<std::size_t>(i)]).transpose();
  for (int j = 0; j < 2; ++j) {
    const double mean = b.col(j).mean();
    const double sd = std::sqrt((b.col(j).array() - mean).square().sum() / 299.0);
    EXPECT_LT(std::abs(mean), 3 * sd / std::sqrt(300.0));
  }
}

namespace {

std::vector<MarkerSeries> logistic_data(int n, double b0, double b1, double tau, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  std::vector<MarkerSeries> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    const double r = tau * z(rng);
    for (int v = 0; v < 5; ++v) {
      const double t = -4.0 + v;
      const double p = 1.0 / (1.0 + std::exp(-(b0 + r + b1 * t)));
      s.push_back({t, u(rng) < p ? 1.0 : 0.0});
    }
  }
  return out;
}

// Plain logistic regression by Newton-Raphson.
Eigen::Vector2d logistic_oracle(const std::vector<MarkerSeries>& data) {
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  for (int it = 0; it < 100; ++it) {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
    for (const auto& s : data)
      for (const auto& o : s) {
        const Eigen::Vector2d x(1.0, o.time);
        const double p = 1.0 / (1.0 + std::exp(-x.dot(beta)));
        g += (o.value - p) * x;
        h += p * (1 - p) * x * x.transpose();
      }
    beta += h.ldlt().solve(g);
  }
  return beta;
}

}  // namespace

TEST(Glmm, ZeroRandomEffectsIsLogisticRegression) {
  const auto data = logistic_data(200, -0.3, 0.4, 1.0, 21);
  MixedModelSpec spec;
  spec.random = BasisSpec::polynomial(0);
  spec.force_zero_random = true;
  const auto fit = fit_glmm_logistic(data, spec);
  const auto oracle = logistic_oracle(data);
  EXPECT_NEAR(fit.beta[0], oracle[0], 1e-4);
  EXPECT_NEAR(fit.beta[1], oracle[1], 1e-4);
}

TEST(Glmm, SeparationIsAnError) {
  std::vector<MarkerSeries> zeros(10, MarkerSeries{{-1, 0}, {0, 0}});
  EXPECT_THROW(fit_glmm_logistic(zeros, MixedModelSpec{}), DataError);
}

TEST(Glmm, RandomInterceptRecoversBeta) {
  const double b0 = -0.5, b1 = 0.3;
  const auto data = logistic_data(300, b0, b1, 1.0, 33);
  MixedModelSpec spec;
  spec.random = BasisSpec::polynomial(0);
  const auto fit = fit_glmm_logistic(data, spec);
  auto ll = [&](const Eigen::VectorXd& b) { return glmm_laplace_loglik(data, spec, b, fit.chol_b); };
  const double se0 = beta_se(ll, fit.beta);
  auto ll_sw = [&](const Eigen::VectorXd& b) {
    return glmm_laplace_loglik(data, spec, Eigen::Vector2d(b[1], b[0]), fit.chol_b);
  };
  const double se1 = beta_se(ll_sw, Eigen::Vector2d(fit.beta[1], fit.beta[0]));
  EXPECT_LT(std::abs(fit.beta[0] - b0), 3 * se0);
  EXPECT_LT(std::abs(fit.beta[1] - b1), 3 * se1);
  EXPECT_GT(fit.chol_b(0, 0) * fit.chol_b(0, 0), 0.2);
}

namespace {

MixedModelFit spline_fit() {
  MixedModelFit f;
  f.basis_fixed = test_spline();
  f.basis_random = BasisSpec::polynomial(1);
  f.time_origin = 4.0;
  f.beta.resize(5);
  f.beta << 1.0, 0.5, -0.8, 0.6, 0.3;
  f.chol_b = Eigen::Matrix2d::Identity();
  f.sigma2 = 1.0;
  return f;
}

}  // namespace

TEST(Summaries, LevelIsDirectBasisEvaluation) {
  const auto f = spline_fit();
  const Eigen::Vector2d b(0.2, -0.1);
  const double direct = basis_row(f.basis_fixed, 0.0).dot(f.beta) + b[0];
  EXPECT_NEAR(level_at(f, b, 4.0), direct, 1e-12);
  EXPECT_NEAR(level_at(f, Eigen::Vector2d::Zero(), 2.5), basis_row(f.basis_fixed, -1.5).dot(f.beta), 1e-12);
}

TEST(Summaries, LinearAndInterceptModels) {
  MixedModelFit f;
  f.basis_fixed = BasisSpec::polynomial(1);
  f.basis_random = BasisSpec::polynomial(1);
  f.beta = Eigen::Vector2d(1.0, 0.5);
  const Eigen::Vector2d b(0.3, 0.2);
  EXPECT_NEAR(slope_at(f, b, 1.7), 0.7, 1e-14);
  f.basis_fixed = BasisSpec::polynomial(0);
  f.basis_random = BasisSpec::polynomial(0);
  f.beta = Eigen::VectorXd::Constant(1, 2.0);
  const Eigen::VectorXd b0 = Eigen::VectorXd::Constant(1, -0.5);
  EXPECT_DOUBLE_EQ(level_at(f, b0, 3.0), 1.5);
  EXPECT_DOUBLE_EQ(slope_at(f, b0, 3.0), 0.0);
  EXPECT_NEAR(cumulative_level(f, b0, 5.0, 5.0), 7.5, 1e-12);
}

TEST(Summaries, SlopeMatchesFiniteDifference) {
  const auto f = spline_fit();
  const Eigen::Vector2d b(0.2, -0.1);
  for (double u : {0.3, 1.1, 2.0, 2.9, 3.7, 4.0}) {
    const double fd = (level_at(f, b, u + 1e-5) - level_at(f, b, u - 1e-5)) / 2e-5;
    EXPECT_NEAR(slope_at(f, b, u), fd, 1e-6);
  }
}

TEST(Summaries, CumulativeLevel) {
  MixedModelFit lin;
  lin.basis_fixed = BasisSpec::polynomial(1);
  lin.basis_random = BasisSpec::none();
  lin.beta = Eigen::Vector2d(1.0, 0.5);
  // a + b t over [0, 4]: 4 + 0.5 * 8
  EXPECT_NEAR(cumulative_level(lin, Eigen::VectorXd(), 4.0, 4.0), 8.0, 1e-10);

  const auto f = spline_fit();
  const Eigen::Vector2d b(0.2, -0.1);
  const double oracle = adaptive_simpson([&](double u) { return level_at(f, b, u); }, 0.0, 4.0, 1e-12);
  EXPECT_NEAR(cumulative_level(f, b, 4.0, 4.0), oracle, 1e-8);
  // Additivity over adjacent windows.
  const double whole = cumulative_level(f, b, 4.0, 3.0);
  const double parts = cumulative_level(f, b, 4.0, 1.2) + cumulative_level(f, b, 2.8, 1.8);
  EXPECT_NEAR(whole, parts, 1e-9);
}

TEST(Summaries, SimulationDesignHas102Columns) {
  ScenarioSpec spec;
  spec.n_subjects = 150;
  const auto g = simulate_cohort(spec);
  const auto design = make_scenario_design(spec);
  const auto cohort = landmark_filter(g.survival, g.longitudinal, 4.0, 3.0);
  const auto markers = simulation_marker_configs(design, 4.0);
  ASSERT_EQ(markers.size(), 17u);
  std::vector<MixedModelFit> fits;
  std::vector<SummaryConfig> configs;
  for (std::size_t k = 0; k < markers.size(); ++k) {
    std::vector<MarkerSeries> series;
    for (const auto& s : cohort.subjects) series.push_back(s.markers[k]);
    fits.push_back(fit_lmm(series, markers[k].spec, markers[k].name));
    configs.push_back(markers[k].summaries);
  }
  const auto d = assemble_design(cohort, fits, configs);
  EXPECT_EQ(d.cols(), 102);
  EXPECT_EQ(design.summary_names.size(), 92u);
  int gamma = 0, cov = 0;
  for (const auto& p : d.provenance) (p.kind == SummaryKind::Covariate ? cov : gamma)++;
  EXPECT_EQ(gamma, 92);
  EXPECT_EQ(cov, 10);
}

TEST(Summaries, SingleMarkerFourColumnsAndOrderInvariance) {
  ScenarioSpec spec;
  spec.n_subjects = 80;
  const auto g = simulate_cohort(spec);
  auto cohort = landmark_filter(g.survival, g.longitudinal, 4.0, 3.0);
  // Keep marker y1 only and no covariates.
  for (auto& s : cohort.subjects) {
    s.markers.resize(1);
    s.covariates.clear();
  }
  cohort.marker_names.resize(1);
  cohort.natures.resize(1);
  cohort.covariate_names.clear();
  std::vector<MarkerSeries> series;
  for (const auto& s : cohort.subjects) series.push_back(s.markers[0]);
  MixedModelSpec ms;
  ms.fixed = BasisSpec::polynomial(0);
  ms.random = BasisSpec::polynomial(0);
  ms.time_origin = 4.0;
  const std::vector<MixedModelFit> fits{fit_lmm(series, ms, cohort.marker_names[0])};
  const std::vector<SummaryConfig> cfg(1);
  const auto d = assemble_design(cohort, fits, cfg);
  EXPECT_EQ(d.cols(), 4);

  auto shuffled = cohort;
  std::reverse(shuffled.subjects.begin(), shuffled.subjects.end());
  const auto d2 = assemble_design(shuffled, fits, cfg);
  const auto n = d.rows();
  for (Eigen::Index i = 0; i < n; ++i) EXPECT_EQ(d.values.row(i), d2.values.row(n - 1 - i));
}
