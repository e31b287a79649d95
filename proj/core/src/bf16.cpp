#include "lowbit/bf16.hpp"

namespace lowbit {

Bf16 Bf16::from_float(float v) noexcept {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
  if ((u & 0x7F800000u) == 0x7F800000u && (u & 0x007FFFFFu) != 0) {
    // Quiet NaN, keep the sign.
    return Bf16{static_cast<std::uint16_t>((u >> 16) | 0x0040u)};
  }
  const std::uint32_t lsb = (u >> 16) & 1u;
  const std::uint32_t rounded = u + 0x7FFFu + lsb;
  return Bf16{static_cast<std::uint16_t>(rounded >> 16)};
}

}  // namespace lowbit
