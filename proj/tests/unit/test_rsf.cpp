#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include <dynpred/error.hpp>
#include <dynpred/log.hpp>
#include <dynpred/metrics.hpp>
#include <dynpred/rsf.hpp>

#include "../support/oracles.hpp"

using namespace dynpred;
using testing_support::make_design;
using testing_support::nelson_aalen_at;
using testing_support::simulate_ph;

namespace {

// Textbook two-sample log-rank Z computed over distinct event times in increasing order.
double logrank_oracle(const std::vector<double>& t, const std::vector<int>& e, const std::vector<char>& g) {
  std::vector<double> ev;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (e[i]) ev.push_back(t[i]);
  std::sort(ev.begin(), ev.end());
  ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
  double o_minus_e = 0.0, v = 0.0;
  for (double s : ev) {
    double n = 0, n1 = 0, d = 0, d1 = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] >= s) {
        ++n;
        if (g[i]) ++n1;
      }
      if (t[i] == s && e[i]) {
        ++d;
        if (g[i]) ++d1;
      }
    }
    o_minus_e += d1 - d * n1 / n;
    if (n > 1) v += d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1);
  }
  return v > 0 ? std::abs(o_minus_e) / std::sqrt(v) : 0.0;
}

std::vector<std::size_t> bootstrap(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, n - 1);
  std::vector<std::size_t> s(n);
  for (auto& v : s) v = d(rng);
  return s;
}

struct QuietWarnings {
  int count = 0;
  QuietWarnings() {
    set_warning_sink([this](const std::string&) { ++count; });
  }
  ~QuietWarnings() { set_warning_sink({}); }
};

}  // namespace

TEST(LogRank, IdenticalGroupsScoreZero) {
  // Each group gets one member of every tied pair: O - E is exactly zero.
  const std::vector<double> t{1, 1, 2, 2, 3, 3};
  const std::vector<int> e{1, 1, 1, 1, 0, 0};
  const std::vector<char> g{1, 0, 1, 0, 1, 0};
  EXPECT_NEAR(logrank_split_score(t, e, g), 0.0, 1e-12);
}

TEST(LogRank, DisjointGroupsHandValue) {
  const std::vector<double> t{1, 2, 3, 4, 5, 6};
  const std::vector<int> e{1, 1, 1, 1, 1, 1};
  const std::vector<char> g{1, 1, 1, 0, 0, 0};
  // O - E = 0.5 + 0.6 + 0.75 and V = 0.25 + 0.24 + 0.1875.
  const double hand = 1.85 / std::sqrt(0.6775);
  EXPECT_NEAR(logrank_split_score(t, e, g), hand, 1e-10);
  EXPECT_NEAR(logrank_oracle(t, e, g), hand, 1e-12);
}

TEST(LogRank, MatchesOracleWithTiesAndCensoring) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> tt(1, 8);
  std::bernoulli_distribution coin(0.5), ev(0.7);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> t;
    std::vector<int> e;
    std::vector<char> g;
    for (int i = 0; i < 25; ++i) {
      t.push_back(tt(rng));
      e.push_back(ev(rng));
      g.push_back(coin(rng));
    }
    EXPECT_NEAR(logrank_split_score(t, e, g), logrank_oracle(t, e, g), 1e-10);
    std::vector<char> flipped(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) flipped[i] = !g[i];
    EXPECT_NEAR(logrank_split_score(t, e, g), logrank_split_score(t, e, flipped), 1e-12);
  }
}

TEST(Tree, OversizedNodesizeGivesNelsonAalen) {
  const auto s = simulate_ph(40, Eigen::VectorXd::Constant(2, 0.5), 3.0, 11);
  std::vector<std::size_t> sample(40);
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  std::mt19937_64 rng(1);
  const auto tree = grow_tree(s.x, s.times, s.events, sample, {2, 40, 32}, rng);
  ASSERT_EQ(tree.nodes.size(), 1u);
  for (double t : {0.05, 0.3, 0.9, 2.0, 10.0})
    EXPECT_NEAR(tree.leaf_chf[0](t), nelson_aalen_at(s.times, s.events, t), 1e-12);
}

TEST(Tree, LeafSizesCoverSampleAndRespectNodesize) {
  const auto s = simulate_ph(200, Eigen::VectorXd::Constant(3, 0.7), 3.0, 12);
  std::mt19937_64 rng(4);
  const auto sample = bootstrap(200, rng);
  const auto tree = grow_tree(s.x, s.times, s.events, sample, {2, 10, 32}, rng);
  EXPECT_GT(tree.leaf_chf.size(), 1u);
  EXPECT_EQ(std::accumulate(tree.leaf_size.begin(), tree.leaf_size.end(), std::size_t{0}), sample.size());
  EXPECT_EQ(std::accumulate(tree.inbag_count.begin(), tree.inbag_count.end(), 0), 200);
  // Every leaf holds at least nodesize distinct subjects.
  std::vector<std::set<std::size_t>> members(tree.leaf_chf.size());
  for (auto r : sample) members[static_cast<std::size_t>(tree.leaf_index(s.x.row(static_cast<Eigen::Index>(r))))].insert(r);
  for (const auto& m : members) EXPECT_GE(m.size(), 10u);
}

TEST(Tree, SeparatingColumnChosenAtRoot) {
  const int n = 60, p = 5;
  std::mt19937_64 data_rng(5);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, p);
  std::vector<double> t(n);
  std::vector<int> e(n, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 1; j < p; ++j) x(i, j) = z(data_rng);
    x(i, 0) = i < n / 2 ? 1.0 : 0.0;
    t[static_cast<std::size_t>(i)] = i < n / 2 ? 1.0 + i : 100.0 + i;
  }
  int hits = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const auto sample = bootstrap(n, rng);
    const auto tree = grow_tree(x, t, e, sample, {p, 5, 32}, rng);
    if (tree.nodes[0].column == 0) ++hits;
  }
  EXPECT_GE(hits, 95);
}

TEST(Forest, DeterministicForSeed) {
  const auto s = simulate_ph(150, Eigen::VectorXd::Constant(2, 0.6), 3.0, 13, 3);
  const auto d = make_design(s.x);
  RsfOptions o;
  o.n_trees = 30;
  o.seed = 99;
  const auto a = fit_rsf(d, s.times, s.events, o);
  const auto b = fit_rsf(d, s.times, s.events, o);
  EXPECT_EQ(predict_rsf_probability(a, d, 1.0), predict_rsf_probability(b, d, 1.0));
  EXPECT_EQ(a.oob_error, b.oob_error);
  o.seed = 100;
  const auto c = fit_rsf(d, s.times, s.events, o);
  EXPECT_NE(predict_rsf_probability(a, d, 1.0), predict_rsf_probability(c, d, 1.0));
}

TEST(Forest, SingleTreeEqualsTreePrediction) {
  const auto s = simulate_ph(120, Eigen::VectorXd::Constant(2, 0.6), 3.0, 14, 2);
  const auto d = make_design(s.x);
  RsfOptions o;
  o.n_trees = 1;
  o.seed = 5;
  const auto f = fit_rsf(d, s.times, s.events, o);
  ASSERT_EQ(f.n_trees(), 1u);
  const auto pred = predict_rsf_probability(f, d, 0.8);
  for (Eigen::Index i = 0; i < d.values.rows(); ++i) {
    const auto& tr = f.trees[0];
    const double h = tr.leaf_chf[static_cast<std::size_t>(tr.leaf_index(d.values.row(i)))](0.8);
    EXPECT_NEAR(pred[static_cast<std::size_t>(i)], 1 - std::exp(-h), 1e-15);
  }
}

TEST(Forest, SingleLeafTreesAverageBootstrapNelsonAalen) {
  const auto s = simulate_ph(50, Eigen::VectorXd::Constant(1, 0.5), 2.0, 15);
  const auto d = make_design(s.x);
  RsfOptions o;
  o.n_trees = 8;
  o.nodesize = 1000;
  const auto f = fit_rsf(d, s.times, s.events, o);
  const double th = 0.7;
  double h = 0.0;
  for (const auto& tr : f.trees) {
    std::vector<double> t;
    std::vector<int> e;
    for (std::size_t i = 0; i < 50; ++i)
      for (int k = 0; k < tr.inbag_count[i]; ++k) {
        t.push_back(s.times[i]);
        e.push_back(s.events[i]);
      }
    h += nelson_aalen_at(t, e, th);
  }
  h /= 8.0;
  EXPECT_NEAR(predict_rsf_probability(f, d.values.row(0), th), 1 - std::exp(-h), 1e-12);

  // One stump: every OOB subject gets the same mortality, so C = 1/2.
  o.n_trees = 1;
  EXPECT_DOUBLE_EQ(fit_rsf(d, s.times, s.events, o).oob_error, 0.5);
}

TEST(Forest, DefaultMtryAndValidation) {
  const auto s = simulate_ph(60, Eigen::VectorXd::Constant(2, 0.5), 3.0, 16, 8);
  const auto d = make_design(s.x);
  RsfOptions o;
  o.n_trees = 2;
  EXPECT_EQ(fit_rsf(d, s.times, s.events, o).mtry, 4);  // ceil(sqrt(10))
  o.n_trees = 0;
  EXPECT_THROW(fit_rsf(d, s.times, s.events, o), ConfigError);
  o.n_trees = 2;
  std::vector<int> none(60, 0);
  EXPECT_THROW(fit_rsf(d, s.times, none, o), DataError);
}

TEST(Forest, PredictionsMonotoneInHorizon) {
  const auto s = simulate_ph(150, Eigen::VectorXd::Constant(2, 0.6), 3.0, 17, 2);
  const auto d = make_design(s.x);
  RsfOptions o;
  o.n_trees = 40;
  const auto f = fit_rsf(d, s.times, s.events, o);
  const double first_event = f.event_grid.front();
  for (Eigen::Index i = 0; i < 20; ++i) {
    EXPECT_EQ(predict_rsf_probability(f, d.values.row(i), 0.5 * first_event), 0.0);
    double prev = 0.0;
    for (double t = 0.1; t < 4.0; t += 0.1) {
      const double pr = predict_rsf_probability(f, d.values.row(i), t);
      EXPECT_GE(pr, prev);
      EXPECT_LE(pr, 1.0);
      prev = pr;
    }
  }
}

TEST(OobError, StableAcrossSeeds) {
  const auto s = simulate_ph(300, Eigen::VectorXd::Constant(2, 0.7), 3.0, 18, 3);
  const auto d = make_design(s.x);
  std::vector<double> errs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RsfOptions o;
    o.n_trees = 200;
    o.seed = seed;
    errs.push_back(fit_rsf(d, s.times, s.events, o).oob_error);
  }
  const double mean = std::accumulate(errs.begin(), errs.end(), 0.0) / 10.0;
  double ss = 0.0;
  for (double v : errs) ss += (v - mean) * (v - mean);
  EXPECT_LT(std::sqrt(ss / 9.0), 0.02);
}

TEST(OobError, NullDataNearHalf) {
  int inside = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto s = simulate_ph(300, Eigen::VectorXd::Zero(0), 3.0, 100 + rep, 4);
    RsfOptions o;
    o.n_trees = 100;
    o.seed = rep + 1;
    const double err = fit_rsf(make_design(s.x), s.times, s.events, o).oob_error;
    if (err >= 0.45 && err <= 0.55) ++inside;
  }
  EXPECT_GE(inside, 18);
}

TEST(OobError, InformativeColumnLowersError) {
  const auto s = simulate_ph(300, Eigen::VectorXd::Constant(1, 1.5), 3.0, 19, 3);
  Eigen::MatrixXd noise = s.x.rightCols(3);
  RsfOptions o;
  o.n_trees = 150;
  const double with = fit_rsf(make_design(s.x), s.times, s.events, o).oob_error;
  const double without = fit_rsf(make_design(noise), s.times, s.events, o).oob_error;
  EXPECT_LE(with, without - 0.1);
}

TEST(Vimp, UnusedAndConstantColumnsAreZero) {
  auto s = simulate_ph(150, Eigen::VectorXd::Constant(2, 0.8), 3.0, 20, 1);
  s.x.col(2).setConstant(1.0);
  const auto d = make_design(s.x);
  RsfOptions o;
  o.n_trees = 50;
  o.mtry = 3;
  const auto f = fit_rsf(d, s.times, s.events, o);
  EXPECT_EQ(vimp(f, 2, 7), 0.0);
  const auto v = vimp_all(f, 7);
  EXPECT_EQ(v[2], 0.0);
  EXPECT_EQ(v[0], vimp(f, 0, 7));
  EXPECT_THROW(vimp(f, 3, 7), std::out_of_range);
}

TEST(Vimp, DominantColumnRanksFirst) {
  int first = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto s = simulate_ph(200, Eigen::VectorXd::Constant(1, 1.5), 3.0, 200 + rep, 4);
    RsfOptions o;
    o.n_trees = 100;
    o.seed = rep + 3;
    const auto v = vimp_all(fit_rsf(make_design(s.x), s.times, s.events, o), rep);
    if (std::max_element(v.begin(), v.end()) == v.begin()) ++first;
  }
  EXPECT_GE(first, 8);
}

TEST(Vimp, NoiseColumnCentredOnZero) {
  std::vector<double> v;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    const auto s = simulate_ph(150, Eigen::VectorXd::Constant(1, 1.0), 3.0, 300 + rep, 1);
    RsfOptions o;
    o.n_trees = 60;
    o.mtry = 2;
    o.seed = rep + 1;
    v.push_back(vimp(fit_rsf(make_design(s.x), s.times, s.events, o), 1, rep));
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 50.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = std::sqrt(ss / 49.0 / 50.0);
  // Permutation importance of pure noise is centred near zero; allow a small negative bias.
  EXPECT_LT(std::abs(mean), 2.0 * se + 1e-3);
}

TEST(Tuning, GridAndTieRule) {
  const auto s = simulate_ph(60, Eigen::VectorXd::Zero(0), 3.0, 21, 3);
  const auto d = make_design(s.x);
  RsfOptions o;
  o.n_trees = 10;
  // Nodesize above n gives the same stump forest in every cell; ties pick the first cell.
  const auto t = tune_rsf(d, s.times, s.events, {3, 1, 2}, {200, 100}, o);
  EXPECT_EQ(t.mtry_grid, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(t.nodesize_grid, (std::vector<int>{200, 100}));
  EXPECT_EQ(t.mtry, 1);
  EXPECT_EQ(t.nodesize, 200);
  for (const auto& row : t.oob_errors)
    for (double e : row) EXPECT_EQ(e, t.oob_errors[0][0]);

  const auto single = tune_rsf(d, s.times, s.events, {2}, {5}, o);
  EXPECT_EQ(single.mtry, 2);
  EXPECT_EQ(single.nodesize, 5);
  EXPECT_EQ(default_mtry_grid(102), (std::vector<int>{11, 34, 51, 102}));
  EXPECT_EQ(default_mtry_grid(1), (std::vector<int>{1}));
}

TEST(Tuning, PicksArgmin) {
  const auto s = simulate_ph(200, Eigen::VectorXd::Constant(1, 1.2), 3.0, 22, 3);
  RsfOptions o;
  o.n_trees = 40;
  const auto t = tune_rsf(make_design(s.x), s.times, s.events, {}, {}, o);
  double best = 1.0;
  for (const auto& row : t.oob_errors)
    for (double e : row) best = std::min(best, e);
  const auto a = static_cast<std::size_t>(std::find(t.mtry_grid.begin(), t.mtry_grid.end(), t.mtry) - t.mtry_grid.begin());
  const auto b = static_cast<std::size_t>(std::find(t.nodesize_grid.begin(), t.nodesize_grid.end(), t.nodesize) -
                                          t.nodesize_grid.begin());
  EXPECT_EQ(t.oob_errors[a][b], best);
}

TEST(SelectVars, SignalKeptAndFallbackWarns) {
  const auto s = simulate_ph(200, Eigen::VectorXd::Constant(1, 1.5), 3.0, 23, 3);
  RsfOptions o;
  o.n_trees = 80;
  const auto f = fit_rsf(make_design(s.x), s.times, s.events, o);
  const auto keep = select_vars_rsf(f, 1);
  EXPECT_NE(std::find(keep.begin(), keep.end(), "x1"), keep.end());
  EXPECT_EQ(keep, select_vars_rsf(f, 1));

  QuietWarnings q;
  o.nodesize = 1000;
  const auto stump = fit_rsf(make_design(s.x), s.times, s.events, o);
  EXPECT_EQ(select_vars_rsf(stump, 1), stump.columns);
  EXPECT_EQ(q.count, 1);
}
