#include "lowbit/formats.hpp"

#include <cmath>

#include "lowbit/centroid.hpp"
#include "lowbit/errors.hpp"

namespace lowbit {

std::string to_string(ScaleRule rule) {
  return rule == ScaleRule::AbsMax ? "absmax" : "absmean";
}

ScaleRule parse_scale_rule(const std::string& token) {
  if (token == "absmax") return ScaleRule::AbsMax;
  if (token == "absmean") return ScaleRule::AbsMean;
  throw ConfigError("unknown scale rule '" + token + "' (expected absmax or absmean)");
}

std::vector<float> uniform_grid_levels(unsigned bits) {
  if (bits < 1 || bits > 8) throw ConfigError("code bits must be in 1..8");
  if (bits == 1) return {-1.0f, 1.0f};
  const int top = (1 << (bits - 1)) - 1;
  std::vector<float> levels;
  levels.reserve(2 * top + 1);
  for (int v = -top; v <= top; ++v) levels.push_back(static_cast<float>(v));
  return levels;
}

QuantFormat QuantFormat::uniform(unsigned bits, std::uint32_t block_size) {
  QuantFormat f;
  f.kind = FormatKind::Uniform;
  f.bits = bits;
  f.block_size = block_size;
  f.scale_rule = bits <= 2 ? ScaleRule::AbsMean : ScaleRule::AbsMax;
  f.mean_shift = bits == 1;
  f.centroids = uniform_grid_levels(bits);
  return f;
}

QuantFormat QuantFormat::kmeans(unsigned bits, std::vector<float> centroids,
                                std::uint32_t block_size) {
  if (bits < 1 || bits > 8) throw ConfigError("code bits must be in 1..8");
  QuantFormat f;
  f.kind = FormatKind::KMeans;
  f.bits = bits;
  f.block_size = block_size;
  f.scale_rule = ScaleRule::AbsMax;
  f.mean_shift = false;
  f.centroids = std::move(centroids);
  return f;
}

double QuantFormat::absmax_divisor() const noexcept {
  if (kind == FormatKind::Uniform && bits >= 2) return static_cast<double>((1u << (bits - 1)) - 1);
  return 1.0;
}

void QuantFormat::validate(bool require_centroids) const {
  if (bits < 1 || bits > 8) throw ConfigError("code bits must be in 1..8");
  if (block_size == 0) throw ConfigError("block size must be positive");
  if (scale_bits != 16) throw ConfigError("only 16-bit block scales are supported");
  if (mean_shift && !(kind == FormatKind::Uniform && bits == 1)) {
    throw ConfigError("mean shift is only defined for the 1-bit uniform format");
  }
  if (kind == FormatKind::Uniform) {
    if (centroids != uniform_grid_levels(bits)) {
      throw ConfigError("uniform format centroids must be the integer grid");
    }
    return;
  }
  if (centroids.empty()) {
    if (require_centroids) throw ConfigError("k-means format has no centroids; fit them first");
    return;
  }
  if (centroids.size() != (std::size_t{1} << bits)) {
    throw ConfigError("k-means format needs 2^n centroids, got " +
                      std::to_string(centroids.size()));
  }
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    if (!std::isfinite(centroids[i])) throw ConfigError("centroids must be finite");
    if (i > 0 && !(centroids[i - 1] < centroids[i])) {
      throw ConfigError("centroids must be strictly increasing");
    }
  }
}

double bit_width(const QuantFormat& format) {
  const double overhead =
      static_cast<double>(format.scale_bits) / static_cast<double>(format.block_size);
  if (format.kind == FormatKind::Uniform && format.bits >= 2) {
    return std::log2(std::ldexp(1.0, static_cast<int>(format.bits)) - 1.0) + overhead;
  }
  return static_cast<double>(format.bits) + overhead;
}

float block_scale_statistic(std::span<const float> block, const QuantFormat& format) {
  double acc = 0.0;
  for (float v : block) {
    if (std::isnan(v)) throw DataError("cannot quantize NaN");
    if (!std::isfinite(v)) throw DataError("cannot quantize a non-finite value");
    const double a = std::abs(static_cast<double>(v));
    if (format.scale_rule == ScaleRule::AbsMax) {
      acc = std::max(acc, a);
    } else {
      acc += a;
    }
  }
  if (format.scale_rule == ScaleRule::AbsMean) {
    if (block.empty()) return 0.0f;
    acc /= static_cast<double>(block.size());
  } else {
    acc /= format.absmax_divisor();
  }
  return static_cast<float>(acc);
}

BlockQuantResult quantize_block(std::span<const float> block, const QuantFormat& format) {
  if (block.size() > format.block_size) {
    throw ShapeError("block length " + std::to_string(block.size()) + " exceeds block size " +
                     std::to_string(format.block_size));
  }
  if (!format.has_centroids()) throw ConfigError("format has no centroids");
  const std::span<const float> levels(format.centroids);

  BlockQuantResult out;
  out.codes.resize(block.size());
  out.scale = Bf16::from_float(block_scale_statistic(block, format));
  const float scale = out.scale.to_float();
  if (!std::isfinite(scale)) throw DataError("block scale overflows 16-bit storage");

  if (scale == 0.0f) {
    const auto zero_code = static_cast<std::uint8_t>(nearest_centroid(0.0f, levels));
    std::fill(out.codes.begin(), out.codes.end(), zero_code);
    out.scale = Bf16{};
    return out;
  }
  for (std::size_t i = 0; i < block.size(); ++i) {
    out.codes[i] = static_cast<std::uint8_t>(nearest_centroid(block[i] / scale, levels));
  }
  return out;
}

std::vector<float> dequantize_block(const BlockQuantResult& q, const QuantFormat& format) {
  const float scale = q.scale.to_float();
  std::vector<float> out(q.codes.size());
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    if (q.codes[i] >= format.centroids.size()) {
      throw DataError("code " + std::to_string(q.codes[i]) + " out of range for " +
                      std::to_string(format.centroids.size()) + " centroids");
    }
    out[i] = scale == 0.0f ? 0.0f : format.centroids[q.codes[i]] * scale;
  }
  return out;
}

std::size_t block_count(std::size_t numel, std::uint32_t block_size) noexcept {
  return (numel + block_size - 1) / block_size;
}

std::size_t CodedTensor::block_length(std::size_t b) const noexcept {
  const std::size_t begin = block_begin(b);
  return std::min<std::size_t>(format.block_size, codes.size() - begin);
}

CodedTensor quantize_tensor(const Tensor& t, const QuantFormat& format) {
  format.validate(/*require_centroids=*/true);
  t.validate();

  CodedTensor q;
  q.format = format;
  q.shape = t.shape;
  q.codes.resize(t.numel());
  q.scales.resize(block_count(t.numel(), format.block_size));

  std::span<const float> values(t.data);
  std::vector<float> shifted;
  if (format.mean_shift) {
    double sum = 0.0;
    for (float v : t.data) sum += v;
    q.mean_shift_value = static_cast<float>(sum / static_cast<double>(t.numel()));
    shifted.resize(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) shifted[i] = t.data[i] - q.mean_shift_value;
    values = shifted;
  }

  for (std::size_t b = 0; b < q.block_count(); ++b) {
    const auto block = values.subspan(q.block_begin(b), q.block_length(b));
    auto r = quantize_block(block, format);
    std::copy(r.codes.begin(), r.codes.end(), q.codes.begin() + q.block_begin(b));
    q.scales[b] = r.scale;
  }
  return q;
}

Tensor dequantize_tensor(const CodedTensor& q) {
  Tensor t;
  t.shape = q.shape;
  t.data.resize(q.numel());
  const auto& levels = q.format.centroids;
  for (std::size_t b = 0; b < q.block_count(); ++b) {
    const float scale = q.scales[b].to_float();
    const std::size_t begin = q.block_begin(b);
    const std::size_t end = begin + q.block_length(b);
    for (std::size_t i = begin; i < end; ++i) {
      if (q.codes[i] >= levels.size()) throw DataError("code out of range");
      t.data[i] = scale == 0.0f ? 0.0f : levels[q.codes[i]] * scale;
    }
  }
  return t;
}

Tensor fake_quantize(const Tensor& t, const QuantFormat& format) {
  return dequantize_tensor(quantize_tensor(t, format));
}

}  // namespace lowbit
