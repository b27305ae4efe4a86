#include <cmath>

#include <gtest/gtest.h>

#include <dynpred/cox.hpp>
#include <dynpred/coxnet.hpp>
#include <dynpred/error.hpp>
#include <dynpred/metrics.hpp>
#include <dynpred/simulate.hpp>

#include "../support/oracles.hpp"

using namespace dynpred;
using testing_support::breslow_loglik;
using testing_support::make_design;
using testing_support::simulate_ph;

namespace {

const std::vector<double> kHandTimes{1, 2, 3};
const std::vector<int> kHandEvents{1, 1, 0};
const std::vector<double> kHandX{1, 0, 1};

double hand_loglik(double b) {
  return b - std::log(2 * std::exp(b) + 1) - std::log(1 + std::exp(b));
}

Eigen::MatrixXd hand_x() { return Eigen::Map<const Eigen::VectorXd>(kHandX.data(), 3); }

}  // namespace

TEST(RiskSets, LoglikMatchesBruteForce) {
  const auto s = simulate_ph(40, Eigen::Vector2d(0.5, -0.3), 2.0, 4);
  std::vector<double> t = s.times;
  for (auto& v : t) v = std::round(v * 10) / 10;  // create ties
  const RiskSets rs(t, s.events);
  const Eigen::VectorXd eta = s.x * Eigen::Vector2d(0.2, 0.1);
  EXPECT_NEAR(rs.loglik(eta), breslow_loglik(t, s.events, eta), 1e-10);
}

TEST(Cox, HandDatasetMatchesGridSearch) {
  double best = -10, best_ll = -1e300;
  for (double b = -10; b <= 10; b += 1e-5)
    if (const double ll = hand_loglik(b); ll > best_ll) {
      best_ll = ll;
      best = b;
    }
  const std::vector<std::string> names{"x"};
  const auto fit = fit_cox(hand_x(), names, kHandTimes, kHandEvents);
  EXPECT_NEAR(fit.coef[0], best, 1e-4);
  EXPECT_NEAR(fit.loglik_partial, hand_loglik(fit.coef[0]), 1e-10);
}

TEST(Cox, HandBreslowPrediction) {
  const std::vector<std::string> names{"x"};
  const auto fit = fit_cox(hand_x(), names, kHandTimes, kHandEvents);
  const double b = fit.coef[0];
  const double lambda0 = 1.0 / (2 * std::exp(b) + 1) + 1.0 / (1 + std::exp(b));  // uncentred Breslow at t = 2
  const double expected = 1 - std::exp(-lambda0 * std::exp(b));
  EXPECT_NEAR(predict_cox_probability(fit, Eigen::VectorXd::Constant(1, 1.0), 2.0), expected, 1e-6);
  // Before the first event the probability is 0.
  EXPECT_EQ(predict_cox_probability(fit, Eigen::VectorXd::Constant(1, 1.0), 0.5), 0.0);
}

TEST(Cox, ZeroColumnIsSingular) {
  Eigen::MatrixXd x(3, 1);
  x.setZero();
  const std::vector<std::string> names{"z"};
  EXPECT_THROW(fit_cox(x, names, kHandTimes, kHandEvents), NumericalError);
}

TEST(Cox, NullModelBaselineIsNelsonAalen) {
  const auto s = simulate_ph(30, Eigen::VectorXd::Constant(1, 0.5), 1.5, 9);
  const Eigen::MatrixXd none(30, 0);
  const auto fit = fit_cox(none, std::vector<std::string>{}, s.times, s.events);
  const auto na = nelson_aalen(s.times, s.events);
  for (double t : {0.1, 0.3, 0.7, 1.0, 1.4, 5.0}) {
    EXPECT_NEAR(fit.baseline_chf(t), na(t), 1e-12);
    EXPECT_NEAR(fit.baseline_chf(t), testing_support::nelson_aalen_at(s.times, s.events, t), 1e-12);
  }
  // Null prediction reduces to 1 - exp(-NA).
  EXPECT_NEAR(predict_cox_probability(fit, Eigen::VectorXd(), 1.0), 1 - std::exp(-na(1.0)), 1e-12);
}

TEST(Cox, ShiftInvariance) {
  const auto s = simulate_ph(200, Eigen::Vector2d(0.7, -0.4), 2.0, 14);
  const std::vector<std::string> names{"a", "b"};
  const auto f1 = fit_cox(s.x, names, s.times, s.events);
  Eigen::MatrixXd shifted = s.x;
  shifted.col(0).array() += 17.0;
  const auto f2 = fit_cox(shifted, names, s.times, s.events);
  EXPECT_LT((f1.coef - f2.coef).cwiseAbs().maxCoeff(), 1e-8);
  Eigen::VectorXd r1 = s.x.row(3).transpose(), r2 = shifted.row(3).transpose();
  EXPECT_NEAR(predict_cox_probability(f1, r1, 1.0), predict_cox_probability(f2, r2, 1.0), 1e-10);
}

TEST(Cox, PredictionMonotoneInHorizon) {
  const auto s = simulate_ph(100, Eigen::Vector2d(0.7, -0.4), 2.0, 15);
  const auto fit = fit_cox(s.x, std::vector<std::string>{"a", "b"}, s.times, s.events);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd r = s.x.row(i).transpose();
    double prev = 0.0;
    for (double t = 0.0; t < 3.0; t += 0.1) {
      const double p = predict_cox_probability(fit, r, t);
      EXPECT_GE(p, prev);
      EXPECT_LE(p, 1.0);
      prev = p;
    }
  }
}

TEST(Cox, MonotoneLikelihoodNamesColumn) {
  // Every event has x = 1, every censoring x = 0, with events before censorings.
  Eigen::MatrixXd x(6, 1);
  x << 1, 1, 1, 0, 0, 0;
  const std::vector<double> t{1, 2, 3, 4, 5, 6};
  const std::vector<int> e{1, 1, 1, 0, 0, 0};
  try {
    fit_cox(x, std::vector<std::string>{"sep"}, t, e);
    FAIL();
  } catch (const NumericalError& err) {
    EXPECT_NE(std::string(err.what()).find("sep"), std::string::npos) << err.what();
  }
}

TEST(BackwardSelect, KeepsSignalColumns) {
  int kept = 0;
  for (int r = 0; r < 50; ++r) {
    const auto s = simulate_ph(400, Eigen::Vector2d(0.8, -0.6), 3.0, 100 + r, 8);
    const auto fit = backward_select_cox(make_design(s.x), s.times, s.events);
    const bool has1 = std::find(fit.columns.begin(), fit.columns.end(), "x1") != fit.columns.end();
    const bool has2 = std::find(fit.columns.begin(), fit.columns.end(), "x2") != fit.columns.end();
    kept += has1 && has2;
  }
  EXPECT_GE(kept, 45);
}

TEST(BackwardSelect, SingleColumnPicksBetterAic) {
  const auto s = simulate_ph(60, Eigen::VectorXd::Constant(1, 0.05), 3.0, 5);
  const auto d = make_design(s.x);
  const auto sel = backward_select_cox(d, s.times, s.events);
  const auto full = fit_cox(d, s.times, s.events);
  const auto null = fit_cox(Eigen::MatrixXd(60, 0), std::vector<std::string>{}, s.times, s.events);
  EXPECT_DOUBLE_EQ(cox_aic(sel), std::min(cox_aic(full), cox_aic(null)));
}

TEST(BackwardSelect, NearDuplicateColumnDropped) {
  auto s = simulate_ph(200, Eigen::Vector2d(0.8, 0.0), 3.0, 6);
  s.x.col(1) = s.x.col(0) + 1e-12 * Eigen::VectorXd::Random(200);
  const auto fit = backward_select_cox(make_design(s.x), s.times, s.events);
  EXPECT_LE(fit.columns.size(), 1u);
}

TEST(Coxnet, LambdaZeroMatchesCox) {
  const auto s = simulate_ph(500, Eigen::Vector3d(0.5, -0.5, 0.25), 3.0, 21, 2);
  const auto d = make_design(s.x);
  CoxnetOptions o;
  o.alpha = 0.5;
  o.n_folds = 0;
  o.append_zero_lambda = true;
  const auto path = fit_coxnet(d, s.times, s.events, o);
  ASSERT_EQ(path.lambda_grid.back(), 0.0);
  const auto cox = fit_cox(d, s.times, s.events);
  EXPECT_LT((path.coef_per_lambda.back() - cox.coef).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Coxnet, LambdaMaxGivesZeroAndObjectiveMonotone) {
  const auto s = simulate_ph(200, Eigen::Vector2d(0.5, -0.5), 3.0, 22, 5);
  const auto d = make_design(s.x);
  CoxnetOptions o;
  o.n_folds = 0;
  const auto path = fit_coxnet(d, s.times, s.events, o);
  EXPECT_NEAR(path.lambda_grid.front(), coxnet_lambda_max(d, s.times, s.events, 1.0), 1e-15);
  EXPECT_EQ(path.coef_per_lambda.front().cwiseAbs().maxCoeff(), 0.0);
  for (const auto& tr : path.objective_trace)
    for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_LE(tr[i], tr[i - 1]);
  // Slightly below lambda_max something enters.
  EXPECT_GT(path.coef_per_lambda[5].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Coxnet, PathRequiresDecreasingGrid) {
  const auto s = simulate_ph(50, Eigen::Vector2d(0.5, -0.5), 3.0, 23);
  const std::vector<double> grid{0.1, 0.2};
  EXPECT_THROW(coxnet_path(make_design(s.x), s.times, s.events, grid), ConfigError);
}

TEST(Coxnet, RidgeUsesFlooredAlpha) {
  const auto s = simulate_ph(100, Eigen::Vector2d(0.5, -0.5), 3.0, 24);
  const auto d = make_design(s.x);
  EXPECT_NEAR(coxnet_lambda_max(d, s.times, s.events, 0.0), coxnet_lambda_max(d, s.times, s.events, 1.0) * 1000,
              1e-9);
}

TEST(Coxnet, CvSelectsAndRefitsAtSelectedLambda) {
  const auto s = simulate_ph(300, Eigen::Vector2d(0.8, -0.6), 3.0, 25, 6);
  const auto d = make_design(s.x);
  const auto path = fit_coxnet(d, s.times, s.events);
  ASSERT_EQ(path.cv_error.size(), path.lambda_grid.size());
  const auto best = std::min_element(path.cv_error.begin(), path.cv_error.end()) - path.cv_error.begin();
  EXPECT_EQ(static_cast<std::ptrdiff_t>(path.selected), best);
  EXPECT_EQ(path.lambda_selected, path.lambda_grid[path.selected]);
  EXPECT_LT((path.fit.coef - path.coef_per_lambda[path.selected]).cwiseAbs().maxCoeff(), 1e-15);
  // A fixed-lambda fit lands on the same coefficients.
  CoxnetOptions o;
  o.fixed_lambda = path.lambda_selected;
  const auto fixed = fit_coxnet(d, s.times, s.events, o);
  EXPECT_LT((fixed.fit.coef - path.fit.coef).cwiseAbs().maxCoeff(), 1e-5);
}

// Lasso on simulated scenarios with four active summaries. The summaries of a
// marker are exactly collinear (level and b0, for instance), so a true summary
// counts as found when the support holds a column correlated with it above 0.99.
TEST(Coxnet, LassoRecoversActiveSummaries) {
  ScenarioSpec spec;
  spec.n_active = 4;
  spec.n_subjects = 500;
  const auto design = make_scenario_design(spec);
  int good = 0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    spec.seed = 500 + r;
    const auto g = simulate_cohort(spec, design);
    Eigen::MatrixXd x(g.gamma0.rows(), g.gamma0.cols() + g.x0.cols());
    x << g.gamma0, g.x0;
    std::vector<std::string> names = design.summary_names;
    names.insert(names.end(), design.covariate_names.begin(), design.covariate_names.end());
    const auto d = make_design(x, names);
    std::vector<double> t;
    std::vector<int> e;
    for (std::size_t i = 0; i < g.event_times.size(); ++i) {
      const double obs = std::min({g.event_times[i], g.censoring_times[i], spec.t_hor});
      t.push_back(obs);
      e.push_back(g.event_times[i] <= std::min(g.censoring_times[i], spec.t_hor) ? 1 : 0);
    }
    CoxnetOptions o;
    o.n_folds = 5;
    o.seed = 7 + r;
    const auto path = fit_coxnet(d, t, e, o);
    std::vector<Eigen::Index> support;
    for (std::size_t j = 0; j < path.columns.size(); ++j)
      if (path.fit.coef[static_cast<Eigen::Index>(j)] != 0.0) support.push_back(d.find_column(path.columns[j]));
    int found = 0;
    for (int a : design.active) {
      const Eigen::VectorXd ca = x.col(a).array() - x.col(a).mean();
      for (Eigen::Index j : support) {
        const Eigen::VectorXd cj = x.col(j).array() - x.col(j).mean();
        if (std::abs(ca.dot(cj)) / (ca.norm() * cj.norm()) > 0.99) {
          ++found;
          break;
        }
      }
    }
    good += found >= 3;
  }
  EXPECT_GE(good, 8);
}
