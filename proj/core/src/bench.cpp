#include "lowbit/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "lowbit/errors.hpp"
#include "lowbit/kmeans.hpp"

namespace lowbit {

BenchResult bench_matmul(MatmulVariant variant, unsigned bits, std::size_t m, std::size_t h,
                         const BenchConfig& cfg) {
  if (h == 0 || cfg.buffers == 0 || cfg.repetitions == 0 || cfg.calls_per_repetition == 0) {
    throw ConfigError("bench: sizes and counts must be positive");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);

  struct Operands {
    QuantizedTensor w;
    LookupTable lut;
    std::vector<float> x;
  };
  std::vector<Operands> ops;
  ops.reserve(cfg.buffers);
  for (std::size_t i = 0; i < cfg.buffers; ++i) {
    Tensor wt;
    wt.shape = {h, h};
    wt.data.resize(h * h);
    for (auto& v : wt.data) v = normal(rng);
    KMeansConfig kc;
    kc.max_iters = 10;
    kc.max_samples = std::size_t{1} << 16;
    const auto format = fit_format_centroids(wt, QuantFormat::kmeans(bits), kc);
    Operands o{encode(wt, format), build_lut(format), std::vector<float>(m * h)};
    for (auto& v : o.x) v = normal(rng);
    ops.push_back(std::move(o));
  }

  MatmulSpec spec;
  spec.m = m;
  spec.h_in = h;
  spec.h_out = h;
  spec.variant = variant;
  std::vector<double> samples;
  samples.reserve(cfg.repetitions);
  volatile float sink = 0.0f;
  std::size_t next = 0;
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t c = 0; c < cfg.calls_per_repetition; ++c) {
      const auto& o = ops[next];
      next = (next + 1) % ops.size();
      const auto y = run_matmul(spec, o.w, o.x, o.lut);
      if (!y.empty()) sink = sink + y.front();
    }
    const std::chrono::duration<double, std::micro> dt = std::chrono::steady_clock::now() - start;
    samples.push_back(dt.count() / static_cast<double>(cfg.calls_per_repetition));
  }

  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var = samples.size() > 1 ? var / static_cast<double>(samples.size() - 1) : 0.0;

  const auto& w = ops.front().w;
  const double bytes = static_cast<double>(payload_bits(w)) / 8.0;
  BenchResult res;
  res.variant = variant;
  res.bits = bits;
  res.m = m;
  res.h = h;
  res.mean_us = mean;
  res.stderr_us = std::sqrt(var / static_cast<double>(samples.size()));
  res.effective_GBps = mean > 0.0 ? bytes / (mean * 1e-6) / 1e9 : 0.0;
  return res;
}

std::string bench_csv_header() { return "variant,bits,m,h,mean_us,stderr_us,effective_GBps"; }

std::string bench_csv_row(const BenchResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%u,%zu,%zu,%.3f,%.3f,%.4f", to_string(r.variant).c_str(),
                r.bits, r.m, r.h, r.mean_us, r.stderr_us, r.effective_GBps);
  return buf;
}

}  // namespace lowbit
