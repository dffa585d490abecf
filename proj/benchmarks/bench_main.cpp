#include <random>

#include <benchmark/benchmark.h>

#include "hetreg/datagen.hpp"
#include "hetreg/energy.hpp"
#include "hetreg/metrics.hpp"
#include "hetreg/mlp.hpp"
#include "hetreg/solver.hpp"

using namespace hetreg;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void BM_FreeEnergyGrad(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Grid1D g = Grid1D::uniform(0.0, 1.0, n);
  std::mt19937_64 rng(1);
  const auto mu = random_vector(rng, g.n_total, -1.0, 1.0);
  const auto lam = random_vector(rng, g.n_total, 0.5, 2.0);
  const auto y = random_vector(rng, g.n_total, -1.0, 1.0);
  const auto reg = RegPair::make(0.5, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(free_energy_grad(mu, lam, y, g, reg));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(g.n_total));
}
BENCHMARK(BM_FreeEnergyGrad)->Arg(256)->Arg(4096);

void BM_SolveFT(benchmark::State& state) {
  const FTGrid ft = make_ft_grid(static_cast<std::size_t>(state.range(0)), SyntheticSpec{Family::sine, true, 64, 1}, 1);
  SolveConfig cfg;
  cfg.epochs = 1000;
  cfg.lr.cycle_len = 100;
  for (auto _ : state) benchmark::DoNotOptimize(solve_ft(ft, RegPair::make(0.5, 0.5), cfg));
  state.SetItemsProcessed(state.iterations() * cfg.epochs);
}
BENCHMARK(BM_SolveFT)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_LossAndGrads(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  const MLP m = MLP::init(1, {width, width}, Head::identity, 1);
  const MLP p = MLP::init(1, {width, width}, Head::softplus, 2);
  const Dataset d = generate_synthetic(SyntheticSpec{Family::sine, true, 64, 1});
  const auto reg = RegPair::make(0.5, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(m, p, d.x, d.y, reg));
}
BENCHMARK(BM_LossAndGrads)->Arg(64)->Arg(128);

void BM_ECE(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  const auto mu = random_vector(rng, n, -1.0, 1.0);
  const auto lam = random_vector(rng, n, 0.5, 2.0);
  const auto y = random_vector(rng, n, -2.0, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(ece(mu, lam, y));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n));
}
BENCHMARK(BM_ECE)->Arg(64)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
