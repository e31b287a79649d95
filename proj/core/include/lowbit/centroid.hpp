#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace lowbit {

/// Index of the centroid nearest to `x` in a strictly increasing centroid
/// list. Exact ties go to the lower index, matching a first-minimum linear
/// scan over |x - c_i|. `x` must not be NaN and `sorted` must be non-empty.
template <typename T>
std::size_t nearest_centroid(T x, std::span<const T> sorted) noexcept {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
  const auto hi = static_cast<std::size_t>(it - sorted.begin());
  if (hi == 0) return 0;
  std::size_t best = hi - 1;
  if (hi < sorted.size()) {
    const T below = x - sorted[hi - 1];
    const T above = sorted[hi] - x;
    if (above < below) return hi;
  }
  // Rounded distances can coincide for neighbouring centroids far from x.
  while (best > 0 && std::abs(x - sorted[best - 1]) == std::abs(x - sorted[best])) --best;
  return best;
}

}  // namespace lowbit
