// Serial reference vs OpenMP kernels. The second argument selects the policy:
// 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "svyconform/conformal.hpp"
#include "svyconform/kernels.hpp"
#include "svyconform/population.hpp"

using namespace svyconform;

namespace {

ExecPolicy policy_of(const benchmark::State& state) {
  return state.range(1) == 0 ? ExecPolicy::kSerial : ExecPolicy::kParallel;
}

struct Data {
  std::vector<double> center, radius, y, probs, labels, q;
  std::vector<int> group;
};

Data make_data(std::size_t n) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  Data d;
  d.center.resize(n);
  d.radius.resize(n);
  d.y.resize(n);
  d.group.resize(n);
  d.probs.resize(3 * n);
  d.labels.resize(n);
  d.q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.center[i] = nd(gen);
    d.radius[i] = std::abs(nd(gen));
    d.y[i] = nd(gen);
    d.group[i] = static_cast<int>(i % 4);
    const double a = std::exp(nd(gen)), b = std::exp(nd(gen)), c = std::exp(nd(gen));
    d.probs[3 * i] = a / (a + b + c);
    d.probs[3 * i + 1] = b / (a + b + c);
    d.probs[3 * i + 2] = c / (a + b + c);
    d.labels[i] = static_cast<double>(i % 3);
    d.q[i] = 0.6;
  }
  return d;
}

void BM_TallyIntervals(benchmark::State& state) {
  const auto d = make_data(static_cast<std::size_t>(state.range(0)));
  const auto policy = policy_of(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::tally_intervals(d.center, d.radius, d.y, d.group, 4, policy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_TallySets(benchmark::State& state) {
  const auto d = make_data(static_cast<std::size_t>(state.range(0)));
  const auto policy = policy_of(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::tally_sets(d.probs, 3, d.q, d.labels, d.group, 4, policy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_WeightedRadii(benchmark::State& state) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  std::vector<double> scores(500), w(500), tw(static_cast<std::size_t>(state.range(0)));
  for (auto& v : scores) v = std::abs(nd(gen));
  for (auto& v : w) v = std::exp(nd(gen));
  for (auto& v : tw) v = std::exp(nd(gen));
  const WeightedScoreCdf cdf(scores, w);
  const auto policy = policy_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::weighted_radii(cdf, 0.9, tw, policy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PredictAll(benchmark::State& state) {
  SyntheticPopSpec spec;
  spec.n_units = static_cast<std::size_t>(state.range(0));
  spec.covariate_dim = 5;
  const auto pop = generate_population(spec);
  const auto model = fit_ols(MatrixView{pop.x_data(), pop.size(), pop.dim()}, pop.y_data());
  const auto policy = policy_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::predict_all(model, pop, policy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FullConformal(benchmark::State& state) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  const std::size_t n = 200, d = 3;
  std::vector<double> x(n * d), y(n), x_test(d);
  for (auto& v : x) v = nd(gen);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i * d] - x[i * d + 1] + nd(gen);
  for (auto& v : x_test) v = nd(gen);
  GridSpec grid;
  grid.points = static_cast<std::size_t>(state.range(0));
  const auto values = make_grid(y, grid);
  FullConformalOptions options;
  options.policy = policy_of(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(full_conformal_mask(MatrixView{x, n, d}, y, x_test, 0.1, values, options));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_TallyIntervals)->ArgsProduct({{1 << 16, 1 << 20}, {0, 1}});
BENCHMARK(BM_TallySets)->ArgsProduct({{1 << 16, 1 << 20}, {0, 1}});
BENCHMARK(BM_WeightedRadii)->ArgsProduct({{1 << 14, 1 << 18}, {0, 1}});
BENCHMARK(BM_PredictAll)->ArgsProduct({{1 << 14, 1 << 18}, {0, 1}});
BENCHMARK(BM_FullConformal)->ArgsProduct({{100, 400}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
