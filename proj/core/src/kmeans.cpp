#include "lowbit/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lowbit/centroid.hpp"
#include "lowbit/errors.hpp"

namespace lowbit {

void KMeansConfig::validate() const {
  if (k < 2) throw ConfigError("k-means needs k >= 2");
  if (!(tol > 0.0)) throw ConfigError("k-means tolerance must be positive");
  if (init == KMeansInit::Explicit && initial_centroids.size() != k) {
    throw ConfigError("explicit k-means init needs exactly k centroids");
  }
}

std::vector<double> uniform_grid(std::size_t k) {
  std::vector<double> g(k);
  if (k == 1) return {0.0};
  for (std::size_t i = 0; i < k; ++i) {
    g[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(k - 1);
  }
  return g;
}

std::vector<std::uint32_t> assign(std::span<const float> samples,
                                  std::span<const float> centroids) {
  if (centroids.empty()) throw ConfigError("assign: empty centroid list");
  std::vector<std::uint32_t> idx(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (std::isnan(samples[i])) throw DataError("assign: NaN sample");
    idx[i] = static_cast<std::uint32_t>(nearest_centroid(samples[i], centroids));
  }
  return idx;
}

namespace {

double mse_with(std::span<const float> samples, std::span<const double> centroids) {
  double sse = 0.0;
  for (float s : samples) {
    const double x = s;
    const double c = centroids[nearest_centroid(x, centroids)];
    sse += (x - c) * (x - c);
  }
  return sse / static_cast<double>(samples.size());
}

std::vector<float> to_float(std::span<const double> v) {
  return {v.begin(), v.end()};
}

std::vector<double> quantile_init(std::span<const float> samples, std::size_t k) {
  std::vector<float> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> c(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    const auto pos = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1));
    c[i] = sorted[pos];
  }
  return c;
}

// Sort, round to float and force strict increase inside [lo, hi].
void separate(std::vector<double>& c, double lo = -HUGE_VAL, double hi = HUGE_VAL) {
  std::sort(c.begin(), c.end());
  for (auto& v : c) v = static_cast<float>(std::clamp(v, lo, hi));
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (!(c[i] > c[i - 1])) c[i] = std::nextafter(static_cast<float>(c[i - 1]), HUGE_VALF);
  }
  for (std::size_t i = c.size(); i-- > 0;) {
    const double cap = i + 1 < c.size() ? std::nextafter(static_cast<float>(c[i + 1]), -HUGE_VALF)
                                         : hi;
    if (c[i] > cap) c[i] = static_cast<float>(cap);
  }
}

KMeansResult degenerate_fit(const std::set<float>& distinct, std::size_t k,
                            std::span<const float> samples) {
  std::vector<double> c(distinct.begin(), distinct.end());
  for (double g : uniform_grid(k)) {
    if (c.size() == k) break;
    if (!distinct.count(static_cast<float>(g))) c.push_back(g);
  }
  separate(c);
  KMeansResult r;
  r.centroids = to_float(c);
  r.mse = mse_with(samples, c);
  r.mse_history = {r.mse};
  r.degenerate = true;
  return r;
}

}  // namespace

double reconstruction_mse(std::span<const float> samples, std::span<const double> centroids) {
  if (centroids.empty()) throw ConfigError("reconstruction_mse: empty centroid list");
  if (samples.empty()) return 0.0;
  return mse_with(samples, centroids);
}

double reconstruction_mse(std::span<const float> samples, std::span<const float> centroids) {
  std::vector<double> c(centroids.begin(), centroids.end());
  return reconstruction_mse(samples, c);
}

KMeansResult lloyd_fit(std::span<const float> samples, const KMeansConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw DataError("lloyd_fit: no samples");
  for (float s : samples) {
    if (!std::isfinite(s)) throw DataError("lloyd_fit: non-finite sample");
  }
  const std::size_t k = cfg.k;

  std::set<float> distinct;
  for (float s : samples) {
    distinct.insert(s);
    if (distinct.size() >= k) break;
  }
  if (distinct.size() < k) return degenerate_fit(distinct, k, samples);

  std::vector<double> c;
  switch (cfg.init) {
    case KMeansInit::UniformGrid: c = uniform_grid(k); break;
    case KMeansInit::Quantile: c = quantile_init(samples, k); break;
    case KMeansInit::Explicit: c = cfg.initial_centroids; break;
  }
  separate(c);

  KMeansResult r;
  double mse = mse_with(samples, c);
  r.mse_history.push_back(mse);

  std::vector<double> sum(k), next(k);
  std::vector<std::size_t> count(k);
  std::vector<std::uint32_t> owner(samples.size());
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto j = nearest_centroid(static_cast<double>(samples[i]), std::span<const double>(c));
      owner[i] = static_cast<std::uint32_t>(j);
      sum[j] += samples[i];
      ++count[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      next[j] = count[j] ? sum[j] / static_cast<double>(count[j]) : c[j];
    }
    // Re-seed empty clusters at the worst-reconstructed samples.
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j]) continue;
      double worst = -1.0;
      std::size_t worst_i = 0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = std::abs(samples[i] - next[owner[i]]);
        if (d > worst) {
          worst = d;
          worst_i = i;
        }
      }
      next[j] = samples[worst_i];
      owner[worst_i] = static_cast<std::uint32_t>(j);
    }
    separate(next);
    const double next_mse = mse_with(samples, next);
    if (next_mse > mse) break;
    ++r.iters;
    const double improvement = mse > 0.0 ? (mse - next_mse) / mse : 0.0;
    c.swap(next);
    mse = next_mse;
    r.mse_history.push_back(mse);
    if (mse == 0.0 || improvement < cfg.tol) break;
  }
  r.centroids = to_float(c);
  r.mse = mse;
  return r;
}

std::vector<float> normalized_samples(const Tensor& t, const QuantFormat& format,
                                      std::size_t max_samples) {
  t.validate();
  const std::size_t n = t.numel();
  const std::size_t stride = n > max_samples ? (n + max_samples - 1) / max_samples : 1;
  std::vector<float> out;
  out.reserve(n / stride + 1);
  const std::span<const float> data(t.data);
  for (std::size_t begin = 0; begin < n; begin += format.block_size) {
    const std::size_t len = std::min<std::size_t>(format.block_size, n - begin);
    const auto block = data.subspan(begin, len);
    const float scale = round_to_bf16(block_scale_statistic(block, format));
    for (std::size_t i = begin; i < begin + len; ++i) {
      if (i % stride != 0) continue;
      out.push_back(scale == 0.0f ? 0.0f : data[i] / scale);
    }
  }
  return out;
}

QuantFormat fit_format_centroids(const Tensor& t, const QuantFormat& format, KMeansConfig cfg) {
  if (format.kind != FormatKind::KMeans) {
    throw ConfigError("fit_format_centroids requires a k-means format");
  }
  QuantFormat probe = format;
  probe.centroids.clear();
  probe.validate();
  cfg.k = std::size_t{1} << format.bits;
  const auto samples = normalized_samples(t, format, cfg.max_samples);
  auto fit = lloyd_fit(samples, cfg);

  QuantFormat out = format;
  std::vector<double> c(fit.centroids.begin(), fit.centroids.end());
  if (format.scale_rule == ScaleRule::AbsMax) {
    separate(c, -1.0, 1.0);
  } else {
    separate(c);
  }
  out.centroids = to_float(c);
  return out;
}

}  // namespace lowbit
