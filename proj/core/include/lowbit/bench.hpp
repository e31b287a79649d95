#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lowbit/kernels.hpp"

namespace lowbit {

struct BenchConfig {
  std::size_t repetitions = 100;
  std::size_t calls_per_repetition = 8;
  std::size_t buffers = 4;  // distinct weight/activation sets cycled per call
  std::uint64_t seed = 42;
};

struct BenchResult {
  MatmulVariant variant = MatmulVariant::LutFused;
  unsigned bits = 4;
  std::size_t m = 1;
  std::size_t h = 0;
  double mean_us = 0.0;
  double stderr_us = 0.0;
  double effective_GBps = 0.0;
};

/// Times one square [h, h] k-means matmul. Each repetition cycles through
/// `buffers` independent weight and activation sets so consecutive calls do
/// not reuse warm operands; the per-call time of every repetition is one
/// sample. Effective bandwidth is packed weight bytes over mean time.
BenchResult bench_matmul(MatmulVariant variant, unsigned bits, std::size_t m, std::size_t h,
                         const BenchConfig& cfg = {});

std::string bench_csv_header();
std::string bench_csv_row(const BenchResult& r);

}  // namespace lowbit
