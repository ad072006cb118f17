#include <benchmark/benchmark.h>

#include <random>

#include "clg/data_synth.hpp"
#include "clg/event_graph.hpp"
#include "clg/gnn_layers.hpp"
#include "clg/hier_pool.hpp"
#include "clg/nk/ops.hpp"
#include "clg/trainer.hpp"

using namespace clg;

namespace {

nk::Tensor<float> random_tensor(std::size_t r, std::size_t c, nk::Rng& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  nk::Tensor<float> t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

nk::Tensor<float> random_adjacency(std::size_t n, nk::Rng& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  nk::Tensor<float> A(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, i) = 1.0f;
    for (std::size_t j = i + 1; j < n; ++j) A(i, j) = A(j, i) = u(rng);
  }
  return A;
}

const QASample& standard_sample() {
  static const SplitDataset data = [] {
    DatasetSpec s;
    s.num_train = 1;
    s.num_val = 0;
    s.num_samples = 1;
    return generate_dataset(s);
  }();
  return data.train.samples.front();
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nk::Rng rng(1);
  nk::Tape<float> tape;
  auto a = tape.constant(random_tensor(n, n, rng));
  auto b = tape.constant(random_tensor(n, n, rng));
  for (auto _ : state) {
    nk::Tape<float> t;
    benchmark::DoNotOptimize(nk::matmul(t.constant(a.value()), t.constant(b.value())).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(160);

static void BM_BuildGraph(benchmark::State& state) {
  const auto& s = standard_sample();
  const auto obs = s.observations();
  for (auto _ : state) benchmark::DoNotOptimize(build_graph<float>(obs, s.K, s.L, s.N).A);
}
BENCHMARK(BM_BuildGraph);

static void BM_GatForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nk::Rng rng(2);
  auto layer = GatLayer<float>::init(64, 64, rng, "gat");
  const auto A = random_adjacency(n, rng);
  const auto X = random_tensor(n, 64, rng);
  for (auto _ : state) {
    nk::Tape<float> t;
    benchmark::DoNotOptimize(gat_forward(layer, t.constant(A), t.constant(X), nk::Binding::Frozen).value());
  }
}
BENCHMARK(BM_GatForward)->Arg(20)->Arg(80)->Arg(160);

static void BM_ClusterStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nk::Rng rng(3);
  auto params = ClusterParams<float>::init(64, n / 2, rng, "c");
  const auto A = random_adjacency(n, rng);
  const auto X = random_tensor(n, 64, rng);
  for (auto _ : state) {
    nk::Tape<float> t;
    benchmark::DoNotOptimize(gnn_cluster_step(params, t.constant(A), t.constant(X), n / 2).pooled.value());
  }
}
BENCHMARK(BM_ClusterStep)->Arg(40)->Arg(160);

static void BM_HierarchyForwardBackward(benchmark::State& state) {
  const auto P = static_cast<std::size_t>(state.range(0));
  const auto& s = standard_sample();
  const auto g = s.graph<float>();
  nk::Rng rng(4);
  auto params = HierParams<float>::init(g.X.cols(), 64, g.num_nodes(), P, rng);
  for (auto _ : state) {
    nk::Tape<float> t;
    auto out = forward_hierarchy(params, t, g);
    t.backward(nk::sum(out.fused.X_g));
    t.flush_param_grads();
  }
  params.visit([](nk::Parameter<float>& p) { p.zero_grad(); });
}
BENCHMARK(BM_HierarchyForwardBackward)->Arg(0)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_GenerateSamples(benchmark::State& state) {
  DatasetSpec s;
  s.num_train = static_cast<std::size_t>(state.range(0));
  s.num_val = 0;
  s.num_samples = s.num_train;
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(s).train.samples.size());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateSamples)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_TrainIterations(benchmark::State& state) {
  DatasetSpec s;
  s.num_train = 64;
  s.num_val = 0;
  s.num_samples = 64;
  const auto data = generate_dataset(s);
  TrainConfig c;
  TrainHooks hooks;
  hooks.max_iterations = 2;
  for (auto _ : state) benchmark::DoNotOptimize(train(c, data.train, nullptr, hooks).log.size());
  state.SetItemsProcessed(state.iterations() * 2);
}
BENCHMARK(BM_TrainIterations)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
