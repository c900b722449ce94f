// Throughput of the hot paths: tape ops, one training step per base learner at the default
// architecture, and a meta-learner fit at validation-block size.

#include <benchmark/benchmark.h>

#include "stackcast/acb_model.hpp"
#include "stackcast/gbt.hpp"
#include "stackcast/tft_model.hpp"

using namespace stackcast;
using diff::Graph;
using diff::Matrix;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(0.0, 1.0);
  return m;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = Eigen::Index(state.range(0));
  diff::Parameter w("w", random_matrix(n, n, 1));
  const Matrix x = random_matrix(32, n, 2);
  for (auto _ : state) {
    Graph g(diff::Mode::Training);
    g.backward(diff::sum(diff::tanh(diff::matmul(g.constant(x), g.param(w)))));
    benchmark::DoNotOptimize(w.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 32 * n * n);
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(32)->Arg(64)->Arg(128);

// One mini-batch step: forward, MSE, backward. Batch 32, look-back 60.
template <class M>
void train_step(benchmark::State& state, M& model, Eigen::Index features) {
  const WindowBatch batch{random_matrix(60 * 32, features, 3), 32, 60};
  const Matrix target = random_matrix(32, 1, 4);
  CounterRng rng(5);
  for (auto _ : state) {
    Graph g(diff::Mode::Training);
    g.backward(diff::mse(model.forward(g, batch, rng), target));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_AcbTrainStep(benchmark::State& state) {
  AcbModel model(AcbArchitecture::baseline(), 1);
  train_step(state, model, kNumOhlcv);
}
BENCHMARK(BM_AcbTrainStep)->Unit(benchmark::kMillisecond);

void BM_TftTrainStep(benchmark::State& state) {
  TftModel model(TftArchitecture{}, 1);
  train_step(state, model, kNumOhlcv + kNumCalendar);
}
BENCHMARK(BM_TftTrainStep)->Unit(benchmark::kMillisecond);

void BM_GbtFit(benchmark::State& state) {
  const auto n = Eigen::Index(state.range(0));
  const Matrix x = random_matrix(n, 2, 6);
  std::vector<double> y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) y[std::size_t(i)] = 3 * x(i, 0) + x(i, 1) * x(i, 1);
  GbtConfig config;
  config.early_stopping_rounds = 0;
  for (auto _ : state) benchmark::DoNotOptimize(BoostedEnsemble::fit(x, y, config));
}
BENCHMARK(BM_GbtFit)->Arg(411)->Arg(3292)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
