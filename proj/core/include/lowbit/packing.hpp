#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lowbit/formats.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit {

/// Packed quantized weight. Codes are stored block by block; each block
/// starts on a byte boundary and packs element j into bits
/// [j*n mod 8, j*n mod 8 + n) of byte floor(j*n/8), lowest bits first.
struct QuantizedTensor {
  QuantFormat format;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> packed;
  std::vector<Bf16> scales;
  float mean_shift_value = 0.0f;

  std::size_t numel() const noexcept;
  std::size_t block_count() const noexcept { return scales.size(); }
  std::size_t block_length(std::size_t b) const noexcept;
  /// Byte range of block b inside `packed`.
  std::size_t block_byte_offset(std::size_t b) const noexcept;
  std::size_t block_byte_count(std::size_t b) const noexcept;

  bool operator==(const QuantizedTensor&) const = default;
};

bool is_packable_width(unsigned bits) noexcept;

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, unsigned bits);
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, unsigned bits,
                                       std::size_t count);

/// Byte -> decoded centroid values. Row b holds the 8/n values packed in b.
class LookupTable {
 public:
  LookupTable() = default;
  explicit LookupTable(const QuantFormat& format);

  unsigned bits() const noexcept { return bits_; }
  std::size_t values_per_byte() const noexcept { return per_byte_; }
  std::span<const float> row(std::uint8_t byte) const noexcept {
    return {entries_.data() + static_cast<std::size_t>(byte) * per_byte_, per_byte_};
  }
  /// True when this table decodes exactly the centroids of `format`.
  bool matches(const QuantFormat& format) const;

 private:
  unsigned bits_ = 0;
  std::size_t per_byte_ = 0;
  std::vector<float> centroids_;
  std::vector<float> entries_;
};

LookupTable build_lut(const QuantFormat& format);

QuantizedTensor pack(const CodedTensor& coded);
CodedTensor unpack(const QuantizedTensor& q);

QuantizedTensor encode(const Tensor& t, const QuantFormat& format);
Tensor decode(const QuantizedTensor& q);

/// Stored payload in bits: packed codes, 16-bit scales, and 32-bit centroids
/// for k-means formats.
std::uint64_t payload_bits(const QuantizedTensor& q);

// QZT1 container, all fields little-endian:
//   "QZT1" | u8 kind | u8 n | u32 B | u8 scale bits | u8 mean-shift flag
//   | u8 rank | rank x u64 dims | f32 mean-shift value
//   | u16 centroid count | count x f32 centroids
//   | block-count x u16 bfloat16 scales | packed codes
// Uniform formats store a centroid count of zero; the grid is implied by n.
std::vector<std::uint8_t> serialize_quantized(const QuantizedTensor& q);
QuantizedTensor deserialize_quantized(std::span<const std::uint8_t> bytes);
void save_quantized(const QuantizedTensor& q, const std::filesystem::path& path);
QuantizedTensor load_quantized(const std::filesystem::path& path);

}  // namespace lowbit
