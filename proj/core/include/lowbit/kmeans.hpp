#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lowbit/formats.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit {

enum class KMeansInit : std::uint8_t { UniformGrid, Quantile, Explicit };

struct KMeansConfig {
  std::size_t k = 16;
  std::size_t max_iters = 100;
  double tol = 1e-7;  // relative MSE improvement
  KMeansInit init = KMeansInit::UniformGrid;
  std::vector<double> initial_centroids;  // used with KMeansInit::Explicit
  std::size_t max_samples = std::size_t{1} << 22;

  void validate() const;
};

struct KMeansResult {
  std::vector<float> centroids;
  double mse = 0.0;
  std::size_t iters = 0;
  /// Fewer than k distinct samples: centroids sit on the distinct values and
  /// the rest are padded onto unused uniform-grid points.
  bool degenerate = false;
  /// Objective before the first update and after every accepted iteration.
  std::vector<double> mse_history;
};

/// k evenly spaced points spanning [-1, 1].
std::vector<double> uniform_grid(std::size_t k);

/// Nearest-centroid index per sample (ties to the lower index).
std::vector<std::uint32_t> assign(std::span<const float> samples, std::span<const float> centroids);

/// Mean squared error of reconstructing `samples` by their nearest centroid.
double reconstruction_mse(std::span<const float> samples, std::span<const double> centroids);
double reconstruction_mse(std::span<const float> samples, std::span<const float> centroids);

/// One-dimensional Lloyd iteration. The objective never increases: a step
/// whose rounded objective would exceed the previous one is rejected and the
/// fit stops.
KMeansResult lloyd_fit(std::span<const float> samples, const KMeansConfig& cfg);

/// Block-normalized samples of `t` pooled tensor-wide: each block is divided
/// by its 16-bit scale under `format`'s scale rule. Deterministically strided
/// down to `max_samples` values when larger.
std::vector<float> normalized_samples(const Tensor& t, const QuantFormat& format,
                                      std::size_t max_samples = std::size_t{1} << 22);

/// Fit the 2^n centroid table of a k-means format to tensor `t`.
QuantFormat fit_format_centroids(const Tensor& t, const QuantFormat& format,
                                 KMeansConfig cfg = {});

}  // namespace lowbit
