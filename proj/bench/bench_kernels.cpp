#include <benchmark/benchmark.h>

#include <vector>

#include "pirank/kernels.hpp"
#include "pirank/rng.hpp"
#include "pirank/topk_dnc.hpp"

using namespace pirank;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Exec exec_of(const benchmark::State& state) { return state.range(1) ? Exec::parallel : Exec::serial; }

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    kernels::matmul(a, b, n, n, n, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Matmul)->ArgsProduct({{64, 256}, {0, 1}});

void BM_AbsRowsum(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t blocks = 16;
  const auto y = random_vec(blocks * n, 3);
  std::vector<double> r(blocks * n);
  for (auto _ : state) {
    kernels::abs_rowsum(y, blocks, n, r, exec_of(state));
    benchmark::DoNotOptimize(r.data());
  }
}
BENCHMARK(BM_AbsRowsum)->ArgsProduct({{125, 1000}, {0, 1}});

void BM_SoftmaxRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = random_vec(n * n, 4);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    kernels::softmax_rows(in, n, n, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_SoftmaxRows)->ArgsProduct({{125, 1000}, {0, 1}});

void BM_NeuralSortLogits(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto y = random_vec(n, 5);
  std::vector<double> r(n), z(n * n);
  kernels::abs_rowsum(y, 1, n, r, Exec::serial);
  for (auto _ : state) {
    kernels::neuralsort_logits(y, r, 1, n, n, 1.0, z, exec_of(state));
    benchmark::DoNotOptimize(z.data());
  }
}
BENCHMARK(BM_NeuralSortLogits)->ArgsProduct({{125, 1000}, {0, 1}});

// Forward top-1 relaxation of one list: depth 1 against depth 3.
void BM_DncTopk(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto depth = static_cast<std::size_t>(state.range(1));
  const auto s = random_vec(n, 6);
  const dnc::DnCPlan plan = dnc::make_plan(n, 1, depth, 1.0);
  for (auto _ : state) {
    Graph g;
    auto rows = dnc::dnc_topk(g.constant(Tensor::vector(s)), plan).rows;
    benchmark::DoNotOptimize(rows.value().data().data());
  }
}
BENCHMARK(BM_DncTopk)->ArgsProduct({{125, 1000}, {1, 3}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
