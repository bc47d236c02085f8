#include <benchmark/benchmark.h>

#include "perfpred/bandit.hpp"
#include "perfpred/collective.hpp"
#include "perfpred/losses.hpp"
#include "perfpred/maps.hpp"
#include "perfpred/solvers.hpp"

using namespace perfpred;

static void BM_SampleLocationScale(benchmark::State& state) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 1.0);
  const Vector theta = Vector::Constant(1, 0.3);
  Stream s(0);
  for (auto _ : state) benchmark::DoNotOptimize(map.sample(theta, state.range(0), s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleLocationScale)->Arg(1000)->Arg(100000);

static void BM_RrmSampled(benchmark::State& state) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.5);
  const QuadraticLoss loss(1.0, 1);
  SolverConfig cfg;
  cfg.kind = SolverKind::rrm;
  cfg.max_steps = 20;
  cfg.batch_size = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(rrm(loss, map, Vector::Zero(1), cfg));
}
BENCHMARK(BM_RrmSampled)->Arg(100)->Arg(10000);

// one elimination round per arm, exact-risk path
static void BM_EliminationExact(benchmark::State& state) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.0);
  const QuadraticLoss loss(1.0, 1);
  const ParamSet box = ParamSet::interval(0.0, 1.0);
  const auto grid = bandit::ArmGrid::uniform(box, 0.01);
  const auto c = certify_constants(loss, map, box);
  bandit::BoundConstants b;
  b.lipschitz_z = *c.lipschitz_z;
  b.epsilon = c.epsilon;
  b.loss_range = loss_range(loss, map.support(box), box);
  b.horizon = state.range(0);
  b.num_arms = grid.size();
  bandit::EliminationConfig cfg;
  cfg.horizon = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(bandit::successive_elimination(loss, map, grid, b, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EliminationExact)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_CollectiveSuccess(benchmark::State& state) {
  const std::size_t n = state.range(0);
  std::vector<std::array<long long, 2>> w(n);
  std::vector<std::size_t> g(n);
  for (std::size_t x = 0; x < n; ++x) {
    w[x] = {static_cast<long long>(x % 7 + 1), static_cast<long long>(x % 3)};
    g[x] = (x * 31 + 5) % n;
  }
  const auto p0 = collective::TabularPopulation::from_weights(w);
  const collective::SignalPlan plan{g, 1, collective::Rational(1, 10)};
  for (auto _ : state) {
    const auto firm = collective::bayes_firm(collective::mixture(p0, plan), 1);
    benchmark::DoNotOptimize(collective::success_probability(p0, plan, firm));
  }
}
BENCHMARK(BM_CollectiveSuccess)->Arg(64)->Arg(1024);

BENCHMARK_MAIN();
