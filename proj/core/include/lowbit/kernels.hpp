#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lowbit/packing.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit {

enum class MatmulVariant : std::uint8_t { Reference, LutFused, LutDeferred };

std::string to_string(MatmulVariant v);
MatmulVariant parse_matmul_variant(const std::string& token);

struct MatmulSpec {
  std::size_t m = 1;
  std::size_t h_in = 0;
  std::size_t h_out = 0;
  std::uint32_t block_size = 64;
  MatmulVariant variant = MatmulVariant::LutFused;
  bool deterministic = true;
};

/// Y = X * dequantize(W)^T for a packed weight W of shape [h_out, h_in] and
/// activations X of shape [m, h_in], all in float32. Every output element is
/// accumulated block-major: a partial sum per weight block segment, left to
/// right, then the partials in block order. With
/// `deterministic == false` output rows are split across threads, which does
/// not change any individual sum.
std::vector<float> matmul_reference(const QuantizedTensor& w, std::span<const float> x,
                                    std::size_t m, bool deterministic = true);

/// Decodes each packed byte through `lut` and applies the block scale to
/// every weight before the multiply; bit-identical to matmul_reference.
std::vector<float> matmul_lut_fused(const QuantizedTensor& w, std::span<const float> x,
                                    std::size_t m, const LookupTable& lut,
                                    bool deterministic = true);

/// Accumulates unscaled centroid products per block and applies the block
/// scale once per block. Agrees with the reference up to float reassociation.
std::vector<float> matmul_lut_deferred(const QuantizedTensor& w, std::span<const float> x,
                                       std::size_t m, const LookupTable& lut,
                                       bool deterministic = true);

/// Tensor convenience wrappers: x is [m, h_in], the result [m, h_out].
Tensor matmul_reference(const QuantizedTensor& w, const Tensor& x);
Tensor matmul_lut_fused(const QuantizedTensor& w, const Tensor& x, const LookupTable& lut);
Tensor matmul_lut_deferred(const QuantizedTensor& w, const Tensor& x, const LookupTable& lut);

std::vector<float> run_matmul(const MatmulSpec& spec, const QuantizedTensor& w,
                              std::span<const float> x, const LookupTable& lut);

/// Floating-point operation count. Fused: 2*m*h_out*h_in multiply-adds plus
/// h_out*h_in scale multiplies. Deferred: 2*m*h_out*h_in plus two operations
/// per (row, block) pair, i.e. 2*m*h^2/B for square h divisible by B.
std::uint64_t flop_count(const MatmulSpec& spec);

}  // namespace lowbit
