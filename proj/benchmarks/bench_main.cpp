#include "spudrf/backbone.hpp"
#include "spudrf/forest.hpp"
#include "spudrf/leaf_optimizer.hpp"
#include "spudrf/random.hpp"
#include "spudrf/self_paced.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace spudrf;

namespace {

Eigen::MatrixXd random_inputs(Eigen::Index dim, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(dim, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) x(i, j) = g(rng);
  return x;
}

ForestModel reference_model(std::size_t depth) {
  auto m = make_forest(init_backbone({8, {64, 64}, 128, Activation::kTanh}, 1), {5, depth, 1e-4}, 1);
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 80.0);
  for (auto& t : m.trees)
    for (auto& l : t.leaves) l = {u(rng), 4.0};
  return m;
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto params = init_backbone({8, {64, 64}, 128, Activation::kTanh}, 0);
  const auto x = random_inputs(8, state.range(0), 3);
  const Eigen::MatrixXd upstream = Eigen::MatrixXd::Ones(128, state.range(0));
  for (auto _ : state) {
    const auto fw = forward_batch(x, params);
    benchmark::DoNotOptimize(backward(upstream, fw.cache, params));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(256);

void BM_ForestLogLikelihood(benchmark::State& state) {
  const auto m = reference_model(static_cast<std::size_t>(state.range(0)));
  const auto x = random_inputs(8, 1, 4);
  const std::vector<double> xs(x.data(), x.data() + 8);
  for (auto _ : state) benchmark::DoNotOptimize(forest_log_likelihood(xs, 37.0, m));
}
BENCHMARK(BM_ForestLogLikelihood)->DenseRange(2, 6, 2);

void BM_ForestEntropy(benchmark::State& state) {
  const auto m = reference_model(6);
  const auto x = random_inputs(8, 1, 5);
  const std::vector<double> xs(x.data(), x.data() + 8);
  for (auto _ : state) benchmark::DoNotOptimize(forest_entropy(xs, m));
}
BENCHMARK(BM_ForestEntropy);

void BM_LeafUpdate(benchmark::State& state) {
  const auto n = state.range(0);
  auto m = reference_model(6);
  const auto routing = compute_routing(m, random_inputs(8, n, 6));
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 80.0);
  std::vector<double> y(static_cast<std::size_t>(n)), v(y.size(), 1.0);
  for (auto& t : y) t = u(rng);
  LeafUpdateConfig cfg;
  cfg.iterations = 1;
  for (auto _ : state) benchmark::DoNotOptimize(update_leaves(m, routing, y, v, cfg));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_LeafUpdate)->Arg(400)->Arg(1600);

void BM_SelectSamples(benchmark::State& state) {
  Rng rng(8);
  std::normal_distribution<double> g(-4.0, 1.0);
  std::vector<double> ll(static_cast<std::size_t>(state.range(0))), h(ll.size());
  for (std::size_t i = 0; i < ll.size(); ++i) {
    ll[i] = g(rng);
    h[i] = g(rng) + 6.0;
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(select_samples(ll, h, 15.0, ll.size() / 2, 0.1, WeightingScheme::kSoft));
}
BENCHMARK(BM_SelectSamples)->Arg(1600);

}  // namespace
BENCHMARK_MAIN();
