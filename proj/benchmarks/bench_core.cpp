#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mixbart/distributions.hpp"
#include "mixbart/ensemble.hpp"
#include "mixbart/interpret.hpp"
#include "mixbart/model.hpp"
#include "mixbart/simlab.hpp"
#include "mixbart/softtree.hpp"

using namespace mixbart;

namespace {

RowMatrix uniform_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0, 1);
  RowMatrix z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = unif(gen);
  return z;
}

SoftTree balanced_tree(int depth, int vars) {
  SoftTree t(0.1);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unif(0.2, 0.8);
  for (int d = 0; d < depth; ++d)
    for (int leaf : t.leaf_ids()) t.grow(leaf, static_cast<int>(gen() % vars), unif(gen));
  Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(t.leaf_count(), -1, 1);
  t.set_leaf_values(mu);
  return t;
}

}  // namespace

// b = y + xi: integral small shapes take the exact path, others the series.
static void BM_PolyaGamma(benchmark::State& state) {
  const double b = static_cast<double>(state.range(0)) / 10.0;
  RngStream rng(1, 1);
  double c = 0.0;
  for (auto _ : state) {
    c = c > 3 ? -3 : c + 0.37;
    benchmark::DoNotOptimize(draw_polya_gamma({b, c}, rng));
  }
}
BENCHMARK(BM_PolyaGamma)->Arg(10)->Arg(30)->Arg(17)->Arg(126)->Arg(1000);

static void BM_Crt(benchmark::State& state) {
  RngStream rng(2, 1);
  const auto y = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(draw_crt({1.3, y}, rng));
}
BENCHMARK(BM_Crt)->Arg(5)->Arg(50);

static void BM_LeafWeights(benchmark::State& state) {
  const SoftTree t = balanced_tree(static_cast<int>(state.range(0)), 10);
  const RowMatrix z = uniform_matrix(1024, 10, 4);
  std::vector<double> out(static_cast<std::size_t>(t.leaf_count()));
  Eigen::Index r = 0;
  for (auto _ : state) {
    t.leaf_weights(std::span<const double>(z.row(r).data(), 10), out);
    benchmark::DoNotOptimize(out.data());
    r = (r + 1) % z.rows();
  }
}
BENCHMARK(BM_LeafWeights)->DenseRange(1, 4);

// One backfitting pass over the ensemble on desk-scale rows.
static void BM_EnsembleSweep(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  BartConfig config;
  config.trees = static_cast<int>(state.range(1));
  const RowMatrix z = uniform_matrix(rows, 10, 5);
  Ensemble ens(config, ExposureRanges::from_matrix(z), static_cast<std::size_t>(rows));
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  Eigen::VectorXd omega(rows), base(rows);
  for (int i = 0; i < rows; ++i) {
    omega[i] = unif(gen);
    base[i] = omega[i] * std::sin(6 * z(i, 0)) * z(i, 1);
  }
  RngStream rng(7, 0);
  for (int warm = 0; warm < 50; ++warm) ens.sweep(z, omega, base, rng);
  for (auto _ : state) {
    ens.sweep(z, omega, base, rng);
    ens.update_hyperparameters(rng);
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_EnsembleSweep)->Args({500, 25})->Args({2000, 25})->Args({2000, 50})->Unit(benchmark::kMillisecond);

// Full Gibbs iteration on the desk-scale simulation.
static void BM_SamplerIteration(benchmark::State& state) {
  SimConfig sim;
  RngStream data_rng(8, 0);
  const SimReplicate rep = generate_replicate(sim, data_rng);
  PriorConfig prior;
  prior.bart.trees = static_cast<int>(state.range(0));
  Sampler sampler(rep.data, rep.car, prior);
  for (int warm = 0; warm < 50; ++warm) sampler.iterate();
  for (auto _ : state) sampler.iterate();
}
BENCHMARK(BM_SamplerIteration)->Arg(25)->Unit(benchmark::kMillisecond);

static void BM_AleFirstOrder(benchmark::State& state) {
  const RowMatrix z = uniform_matrix(2000, 10, 9);
  const Surface f = surface_from_function([](std::span<const double> v) { return friedman_surface(v); });
  for (auto _ : state) benchmark::DoNotOptimize(ale_first_order(f, z, 0, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_AleFirstOrder)->Arg(20)->Arg(200)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
