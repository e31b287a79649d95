#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "lowbit/kernels.hpp"
#include "lowbit/kmeans.hpp"
#include "lowbit/packing.hpp"

namespace {

using namespace lowbit;

struct Operands {
  QuantizedTensor w;
  LookupTable lut;
  std::vector<float> x;
};

Operands make_operands(unsigned bits, std::size_t m, std::size_t h) {
  std::mt19937_64 rng(42);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  Tensor w({h, h}, std::vector<float>(h * h));
  for (auto& v : w.data) v = nd(rng);
  const auto format = fit_format_centroids(w, QuantFormat::kmeans(bits));
  Operands ops{encode(w, format), LookupTable(format), std::vector<float>(m * h)};
  for (auto& v : ops.x) v = nd(rng);
  return ops;
}

void set_counters(benchmark::State& state, const Operands& ops, std::size_t m, std::size_t h,
                  MatmulVariant variant) {
  MatmulSpec spec{m, h, h, ops.w.format.block_size, variant, true};
  state.counters["flops"] = benchmark::Counter(static_cast<double>(flop_count(spec)),
                                               benchmark::Counter::kIsIterationInvariantRate);
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * ops.w.packed.size()));
}

void BM_Reference(benchmark::State& state) {
  const auto bits = static_cast<unsigned>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const auto h = static_cast<std::size_t>(state.range(2));
  const auto ops = make_operands(bits, m, h);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_reference(ops.w, ops.x, m));
  set_counters(state, ops, m, h, MatmulVariant::Reference);
}

void BM_LutFused(benchmark::State& state) {
  const auto bits = static_cast<unsigned>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const auto h = static_cast<std::size_t>(state.range(2));
  const auto ops = make_operands(bits, m, h);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_lut_fused(ops.w, ops.x, m, ops.lut));
  set_counters(state, ops, m, h, MatmulVariant::LutFused);
}

void BM_LutDeferred(benchmark::State& state) {
  const auto bits = static_cast<unsigned>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const auto h = static_cast<std::size_t>(state.range(2));
  const auto ops = make_operands(bits, m, h);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_lut_deferred(ops.w, ops.x, m, ops.lut));
  set_counters(state, ops, m, h, MatmulVariant::LutDeferred);
}

void shapes(benchmark::internal::Benchmark* b) {
  for (int bits : {1, 2, 4, 8})
    for (int m : {1, 8})
      for (int h : {1024, 4096}) b->Args({bits, m, h});
}

}  // namespace

BENCHMARK(BM_Reference)->Apply(shapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LutFused)->Apply(shapes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LutDeferred)->Apply(shapes)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
