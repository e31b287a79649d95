#pragma once

#include <bit>
#include <cstdint>

namespace lowbit {

/// bfloat16 storage: the upper half of an IEEE-754 binary32, produced with
/// round-to-nearest-even. Block scales are stored in this encoding.
struct Bf16 {
  std::uint16_t bits = 0;

  static Bf16 from_float(float v) noexcept;
  float to_float() const noexcept {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
  }

  bool operator==(const Bf16&) const = default;
};

/// Round a float to the nearest bfloat16-representable value.
inline float round_to_bf16(float v) noexcept { return Bf16::from_float(v).to_float(); }

}  // namespace lowbit
