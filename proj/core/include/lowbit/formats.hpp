#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lowbit/bf16.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit {

enum class ScaleRule : std::uint8_t { AbsMax = 0, AbsMean = 1 };

std::string to_string(ScaleRule rule);
ScaleRule parse_scale_rule(const std::string& token);

/// A block-scaled scalar quantization format: scale rule, centroid set and
/// block size. Uniform formats carry their integer grid in `centroids`
/// ({-(2^(n-1)-1) .. 2^(n-1)-1}, or {-1, 1} at one bit); k-means formats
/// carry 2^n learned centroids in [-1, 1] once fitted.
struct QuantFormat {
  FormatKind kind = FormatKind::Uniform;
  unsigned bits = 4;
  std::uint32_t block_size = 64;
  unsigned scale_bits = 16;
  ScaleRule scale_rule = ScaleRule::AbsMax;
  bool mean_shift = false;
  std::vector<float> centroids;

  /// Integer format with the default rules: absmean at n <= 2, absmax
  /// above, and tensor-wise mean shift at one bit.
  static QuantFormat uniform(unsigned bits, std::uint32_t block_size = 64);
  /// k-means format; `centroids` may be left empty until fitted.
  static QuantFormat kmeans(unsigned bits, std::vector<float> centroids = {},
                            std::uint32_t block_size = 64);

  std::size_t level_count() const noexcept { return centroids.size(); }
  bool has_centroids() const noexcept { return !centroids.empty(); }

  /// Divisor applied to the absmax statistic: the largest integer level for
  /// uniform formats, 1 for k-means.
  double absmax_divisor() const noexcept;

  /// Throws ConfigError when any structural invariant is broken. A k-means
  /// format without centroids passes unless `require_centroids` is set.
  void validate(bool require_centroids = false) const;

  bool operator==(const QuantFormat&) const = default;
};

std::vector<float> uniform_grid_levels(unsigned bits);

/// Average stored bits per weight including block-scale overhead.
/// Uniform n >= 2 counts log2(2^n - 1) code bits; everything else n.
double bit_width(const QuantFormat& format);

struct BlockQuantResult {
  std::vector<std::uint8_t> codes;
  Bf16 scale;  // zero marks an all-zero block
};

/// Scale statistic for one block before 16-bit rounding.
float block_scale_statistic(std::span<const float> block, const QuantFormat& format);

BlockQuantResult quantize_block(std::span<const float> block, const QuantFormat& format);
std::vector<float> dequantize_block(const BlockQuantResult& q, const QuantFormat& format);

/// Per-element codes and per-block scales before bit packing.
struct CodedTensor {
  QuantFormat format;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> codes;
  std::vector<Bf16> scales;
  float mean_shift_value = 0.0f;

  std::size_t numel() const noexcept { return codes.size(); }
  std::size_t block_count() const noexcept { return scales.size(); }
  std::size_t block_begin(std::size_t b) const noexcept { return b * format.block_size; }
  std::size_t block_length(std::size_t b) const noexcept;

  bool operator==(const CodedTensor&) const = default;
};

std::size_t block_count(std::size_t numel, std::uint32_t block_size) noexcept;

CodedTensor quantize_tensor(const Tensor& t, const QuantFormat& format);
Tensor dequantize_tensor(const CodedTensor& q);

/// dequantize(quantize(t)) in one call; the fake-quantized forward value.
Tensor fake_quantize(const Tensor& t, const QuantFormat& format);

}  // namespace lowbit
