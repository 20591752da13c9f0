#include <benchmark/benchmark.h>

#include <numeric>
#include <random>
#include <vector>

#include "kanagg/kernels.hpp"
#include "kanagg/network.hpp"

using namespace kanagg;

namespace {

struct Fixture {
  Network net;
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> rows;

  Fixture(std::size_t n_in, std::size_t batch) : features(batch, n_in) {
    NetworkConfig cfg;
    cfg.widths = {n_in, 10, 2};
    cfg.aggregators = {Aggregator::Mean, Aggregator::Mean};
    cfg.seed = 1;
    net = build_network(cfg);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < n_in; ++c) features(r, c) = dist(rng);
      labels.push_back(static_cast<int>(r % 2));
    }
    rows.resize(batch);
    std::iota(rows.begin(), rows.end(), 0);
  }
};

void forward(benchmark::State& state, ExecutionPolicy policy) {
  Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_batch(f.net, f.features, f.rows, policy));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void gradient(benchmark::State& state, ExecutionPolicy policy) {
  Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        batch_gradient(f.net, f.features, f.labels, f.rows, HeadMode::Softmax, policy));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void shapes(benchmark::internal::Benchmark* b) {
  for (int n_in : {8, 34}) {
    for (int batch : {32, 512}) b->Args({n_in, batch});
  }
}

}  // namespace

BENCHMARK_CAPTURE(forward, serial, ExecutionPolicy::Serial)->Apply(shapes);
BENCHMARK_CAPTURE(forward, parallel, ExecutionPolicy::Parallel)->Apply(shapes);
BENCHMARK_CAPTURE(gradient, serial, ExecutionPolicy::Serial)->Apply(shapes);
BENCHMARK_CAPTURE(gradient, parallel, ExecutionPolicy::Parallel)->Apply(shapes);

BENCHMARK_MAIN();
