#include "lowbit/packing.hpp"

#include <algorithm>

#include "lowbit/byteio.hpp"
#include "lowbit/errors.hpp"

namespace lowbit {

namespace {

constexpr char kQuantMagic[4] = {'Q', 'Z', 'T', '1'};

void require_packable(unsigned bits) {
  if (!is_packable_width(bits)) {
    throw Unsupported("bit packing supports n in {1, 2, 4, 8}, got n = " +
                      std::to_string(bits));
  }
}

std::size_t packed_bytes(std::size_t count, unsigned bits) {
  return (count * bits + 7) / 8;
}

}  // namespace

bool is_packable_width(unsigned bits) noexcept {
  return bits == 1 || bits == 2 || bits == 4 || bits == 8;
}

std::size_t QuantizedTensor::numel() const noexcept {
  return static_cast<std::size_t>(shape_numel(shape));
}

std::size_t QuantizedTensor::block_length(std::size_t b) const noexcept {
  const std::size_t begin = b * format.block_size;
  return std::min<std::size_t>(format.block_size, numel() - begin);
}

std::size_t QuantizedTensor::block_byte_offset(std::size_t b) const noexcept {
  return b * packed_bytes(format.block_size, format.bits);
}

std::size_t QuantizedTensor::block_byte_count(std::size_t b) const noexcept {
  return packed_bytes(block_length(b), format.bits);
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, unsigned bits) {
  require_packable(bits);
  const unsigned limit = 1u << bits;
  std::vector<std::uint8_t> out(packed_bytes(codes.size(), bits), 0);
  for (std::size_t j = 0; j < codes.size(); ++j) {
    if (codes[j] >= limit) {
      throw DataError("code " + std::to_string(codes[j]) + " does not fit in " +
                      std::to_string(bits) + " bits");
    }
    const std::size_t bit = j * bits;
    out[bit / 8] |= static_cast<std::uint8_t>(codes[j] << (bit % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, unsigned bits,
                                       std::size_t count) {
  require_packable(bits);
  if (packed.size() < packed_bytes(count, bits)) {
    throw FormatError("unpack: need " + std::to_string(packed_bytes(count, bits)) +
                      " bytes for " + std::to_string(count) + " codes, have " +
                      std::to_string(packed.size()));
  }
  const unsigned mask = (1u << bits) - 1u;
  std::vector<std::uint8_t> codes(count);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t bit = j * bits;
    codes[j] = static_cast<std::uint8_t>((packed[bit / 8] >> (bit % 8)) & mask);
  }
  return codes;
}

LookupTable::LookupTable(const QuantFormat& format)
    : bits_(format.bits), centroids_(format.centroids) {
  require_packable(format.bits);
  if (centroids_.empty()) throw ConfigError("lookup table needs a format with centroids");
  per_byte_ = 8 / bits_;
  entries_.resize(256 * per_byte_);
  const unsigned mask = (1u << bits_) - 1u;
  for (unsigned byte = 0; byte < 256; ++byte) {
    for (std::size_t j = 0; j < per_byte_; ++j) {
      const unsigned code = (byte >> (j * bits_)) & mask;
      // The unused top code of a 2^n - 1 level grid decodes to the largest level.
      const std::size_t idx = std::min<std::size_t>(code, centroids_.size() - 1);
      entries_[byte * per_byte_ + j] = centroids_[idx];
    }
  }
}

bool LookupTable::matches(const QuantFormat& format) const {
  return bits_ == format.bits && centroids_ == format.centroids;
}

LookupTable build_lut(const QuantFormat& format) { return LookupTable(format); }

QuantizedTensor pack(const CodedTensor& coded) {
  require_packable(coded.format.bits);
  QuantizedTensor q;
  q.format = coded.format;
  q.shape = coded.shape;
  q.scales = coded.scales;
  q.mean_shift_value = coded.mean_shift_value;
  q.packed.reserve(packed_bytes(coded.numel(), coded.format.bits) + coded.block_count());
  const std::span<const std::uint8_t> codes(coded.codes);
  for (std::size_t b = 0; b < coded.block_count(); ++b) {
    const auto bytes =
        pack_codes(codes.subspan(coded.block_begin(b), coded.block_length(b)), coded.format.bits);
    q.packed.insert(q.packed.end(), bytes.begin(), bytes.end());
  }
  return q;
}

CodedTensor unpack(const QuantizedTensor& q) {
  CodedTensor c;
  c.format = q.format;
  c.shape = q.shape;
  c.scales = q.scales;
  c.mean_shift_value = q.mean_shift_value;
  c.codes.reserve(q.numel());
  const std::span<const std::uint8_t> packed(q.packed);
  for (std::size_t b = 0; b < q.block_count(); ++b) {
    const auto off = q.block_byte_offset(b);
    if (off > packed.size()) throw FormatError("packed codes truncated");
    const auto codes =
        unpack_codes(packed.subspan(off), q.format.bits, q.block_length(b));
    c.codes.insert(c.codes.end(), codes.begin(), codes.end());
  }
  return c;
}

QuantizedTensor encode(const Tensor& t, const QuantFormat& format) {
  require_packable(format.bits);
  return pack(quantize_tensor(t, format));
}

Tensor decode(const QuantizedTensor& q) { return dequantize_tensor(unpack(q)); }

std::uint64_t payload_bits(const QuantizedTensor& q) {
  std::uint64_t bits = static_cast<std::uint64_t>(q.packed.size()) * 8 +
                       static_cast<std::uint64_t>(q.scales.size()) * 16;
  if (q.format.kind == FormatKind::KMeans) bits += q.format.centroids.size() * 32;
  return bits;
}

std::vector<std::uint8_t> serialize_quantized(const QuantizedTensor& q) {
  q.format.validate(true);
  if (q.shape.empty() || q.shape.size() > 255) throw ShapeError("quantized tensor rank out of range");
  detail::ByteWriter w;
  w.bytes(kQuantMagic, 4);
  w.u8(static_cast<std::uint8_t>(q.format.kind));
  w.u8(static_cast<std::uint8_t>(q.format.bits));
  w.u32(q.format.block_size);
  w.u8(static_cast<std::uint8_t>(q.format.scale_bits));
  // Bit 0: mean shift. Bit 1: absmean scale rule when it differs from the
  // format default.
  std::uint8_t flags = q.format.mean_shift ? 1 : 0;
  const bool default_absmean = q.format.kind == FormatKind::Uniform && q.format.bits <= 2;
  if ((q.format.scale_rule == ScaleRule::AbsMean) != default_absmean) flags |= 2;
  w.u8(flags);
  w.u8(static_cast<std::uint8_t>(q.shape.size()));
  for (auto d : q.shape) w.u64(d);
  w.f32(q.mean_shift_value);
  if (q.format.kind == FormatKind::KMeans) {
    w.u16(static_cast<std::uint16_t>(q.format.centroids.size()));
    for (float c : q.format.centroids) w.f32(c);
  } else {
    w.u16(0);
  }
  for (auto s : q.scales) w.u16(s.bits);
  w.bytes(q.packed.data(), q.packed.size());
  return std::move(w.buffer());
}

QuantizedTensor deserialize_quantized(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "QZT1");
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kQuantMagic)) throw FormatError("QZT1: bad magic");
  const auto kind = r.u8();
  if (kind > 1) throw FormatError("QZT1: unknown format kind " + std::to_string(kind));
  const unsigned bits = r.u8();
  const std::uint32_t block = r.u32();
  const unsigned scale_bits = r.u8();
  const auto flags = r.u8();
  if (!is_packable_width(bits)) throw FormatError("QZT1: unsupported code width");
  if (block == 0) throw FormatError("QZT1: zero block size");

  QuantizedTensor q;
  q.format = kind == 0 ? QuantFormat::uniform(bits, block) : QuantFormat::kmeans(bits, {}, block);
  q.format.scale_bits = scale_bits;
  q.format.mean_shift = (flags & 1) != 0;
  if (flags & 2) {
    q.format.scale_rule =
        q.format.scale_rule == ScaleRule::AbsMax ? ScaleRule::AbsMean : ScaleRule::AbsMax;
  }
  const auto rank = r.u8();
  if (rank == 0) throw FormatError("QZT1: rank must be >= 1");
  q.shape.resize(rank);
  for (auto& d : q.shape) {
    d = r.u64();
    if (d == 0) throw FormatError("QZT1: zero dimension");
  }
  q.mean_shift_value = r.f32();
  const auto ncent = r.u16();
  if (kind == 1) {
    q.format.centroids.resize(ncent);
    for (auto& c : q.format.centroids) c = r.f32();
  } else if (ncent != 0) {
    throw FormatError("QZT1: uniform format must not carry a centroid table");
  }
  try {
    q.format.validate(true);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("QZT1: invalid format: ") + e.what());
  }
  const std::size_t nblocks = block_count(static_cast<std::size_t>(shape_numel(q.shape)), block);
  if (nblocks > r.remaining() / 2) throw FormatError("QZT1: truncated scales");
  q.scales.resize(nblocks);
  for (auto& s : q.scales) s.bits = r.u16();
  const std::size_t expected =
      nblocks == 0 ? 0 : q.block_byte_offset(nblocks - 1) + q.block_byte_count(nblocks - 1);
  const auto codes = r.take(expected);
  q.packed.assign(codes.begin(), codes.end());
  if (r.remaining() != 0) throw FormatError("QZT1: trailing bytes after packed codes");
  return q;
}

void save_quantized(const QuantizedTensor& q, const std::filesystem::path& path) {
  detail::write_file(path, serialize_quantized(q));
}

QuantizedTensor load_quantized(const std::filesystem::path& path) {
  return deserialize_quantized(detail::read_file(path));
}

}  // namespace lowbit
