#include <numeric>
#include <random>

#include <benchmark/benchmark.h>

#include <dynpred/cox.hpp>
#include <dynpred/coxnet.hpp>
#include <dynpred/metrics.hpp>
#include <dynpred/mixed_model.hpp>
#include <dynpred/rsf.hpp>

#include "support/oracles.hpp"

namespace ts = testing_support;

namespace {

ts::SurvData data(int n, int noise) {
  Eigen::VectorXd beta(4);
  beta << 0.6, -0.4, 0.3, 0.2;
  return ts::simulate_ph(n, beta, 3.0, 42, noise);
}

void BM_FitCox(benchmark::State& state) {
  const auto s = data(static_cast<int>(state.range(0)), 16);
  const auto d = ts::make_design(s.x);
  for (auto _ : state) benchmark::DoNotOptimize(dynpred::fit_cox(d, s.times, s.events));
}
BENCHMARK(BM_FitCox)->Arg(500)->Arg(2000);

void BM_CoxnetPath(benchmark::State& state) {
  const auto s = data(500, static_cast<int>(state.range(0)));
  const auto d = ts::make_design(s.x);
  dynpred::CoxnetOptions o;
  o.n_folds = 0;
  for (auto _ : state) benchmark::DoNotOptimize(dynpred::fit_coxnet(d, s.times, s.events, o));
}
BENCHMARK(BM_CoxnetPath)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_GrowTree(benchmark::State& state) {
  const auto s = data(500, 96);
  std::vector<std::size_t> sample(500);
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  std::mt19937_64 rng(1);
  const dynpred::TreeOptions o{11, static_cast<int>(state.range(0)), 32};
  for (auto _ : state) benchmark::DoNotOptimize(dynpred::grow_tree(s.x, s.times, s.events, sample, o, rng));
}
BENCHMARK(BM_GrowTree)->Arg(5)->Arg(30)->Unit(benchmark::kMillisecond);

void BM_Forest(benchmark::State& state) {
  const auto s = data(500, 96);
  const auto d = ts::make_design(s.x);
  dynpred::RsfOptions o;
  o.n_trees = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(dynpred::fit_rsf(d, s.times, s.events, o));
}
BENCHMARK(BM_Forest)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_IpcwBrier(benchmark::State& state) {
  const auto s = data(static_cast<int>(state.range(0)), 0);
  std::vector<double> p(s.times.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + static_cast<double>(i % 7));
  for (auto _ : state) benchmark::DoNotOptimize(dynpred::ipcw_brier(p, s.times, s.events, 1.0));
}
BENCHMARK(BM_IpcwBrier)->Arg(500)->Arg(5000);

void BM_FitLmm(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<dynpred::MarkerSeries> series(static_cast<std::size_t>(state.range(0)));
  for (auto& s : series) {
    const double b0 = z(rng), b1 = 0.3 * z(rng);
    for (int v = 0; v < 5; ++v) {
      const double t = -4.0 + v + 0.1 * z(rng);
      s.push_back({t, 1 + b0 + (0.5 + b1) * t + 0.4 * z(rng)});
    }
  }
  const dynpred::MixedModelSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(dynpred::fit_lmm(series, spec));
}
BENCHMARK(BM_FitLmm)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
