#include "lowbit/kernels.hpp"

#include <algorithm>
#include <thread>

#include "lowbit/errors.hpp"

namespace lowbit {

namespace {

struct Dims {
  std::size_t h_out;
  std::size_t h_in;
};

Dims check_shapes(const QuantizedTensor& w, std::span<const float> x, std::size_t m) {
  if (w.shape.size() != 2) throw ShapeError("weight must be a matrix [h_out, h_in]");
  const Dims d{static_cast<std::size_t>(w.shape[0]), static_cast<std::size_t>(w.shape[1])};
  if (x.size() != m * d.h_in) {
    throw ShapeError("activation length " + std::to_string(x.size()) + " != m * h_in = " +
                     std::to_string(m * d.h_in));
  }
  if (w.scales.size() != block_count(w.numel(), w.format.block_size)) {
    throw ShapeError("weight scale count does not match its block count");
  }
  return d;
}

void check_lut(const QuantizedTensor& w, const LookupTable& lut) {
  if (!lut.matches(w.format)) {
    throw ConfigError("lookup table was not built from the weight's format");
  }
}

// Runs body(row) for every output row, optionally split over threads.
template <typename Body>
void for_each_row(std::size_t rows, bool deterministic, Body body) {
  const std::size_t workers =
      deterministic ? 1 : std::max<std::size_t>(1, std::min<std::size_t>(
                                                       rows, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t r = 0; r < rows; ++r) body(r);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (rows + workers - 1) / workers;
  for (std::size_t t = 0; t < workers; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([=] {
      for (std::size_t r = begin; r < end; ++r) body(r);
    });
  }
}

// Walks the flat weight range [begin, begin + len) one block segment at a
// time. `segment(block, first_offset, count, x_offset)` sees offsets within
// the block.
template <typename Segment>
void for_each_segment(const QuantizedTensor& w, std::size_t begin, std::size_t len,
                      Segment segment) {
  const std::size_t B = w.format.block_size;
  std::size_t e = begin;
  const std::size_t end = begin + len;
  while (e < end) {
    const std::size_t b = e / B;
    const std::size_t block_end = std::min(end, b * B + w.block_length(b));
    segment(b, e - b * B, block_end - e, e - begin);
    e = block_end;
  }
}

// Decodes `count` weights of block b starting at offset j through the LUT,
// handing each unscaled centroid value to `sink` in order.
template <typename Sink>
void lut_decode(const QuantizedTensor& w, const LookupTable& lut, std::size_t b, std::size_t j,
                std::size_t count, Sink sink) {
  const unsigned n = w.format.bits;
  const std::size_t per_byte = lut.values_per_byte();
  const std::uint8_t* bytes = w.packed.data() + w.block_byte_offset(b);
  std::size_t done = 0;
  while (done < count) {
    const std::size_t jj = j + done;
    const auto row = lut.row(bytes[jj * n / 8]);
    const std::size_t lane = (jj * n % 8) / n;
    const std::size_t take = std::min(per_byte - lane, count - done);
    for (std::size_t t = 0; t < take; ++t) sink(row[lane + t]);
    done += take;
  }
}

}  // namespace

std::string to_string(MatmulVariant v) {
  switch (v) {
    case MatmulVariant::Reference: return "reference";
    case MatmulVariant::LutFused: return "lut_fused";
    case MatmulVariant::LutDeferred: return "lut_deferred";
  }
  return "unknown";
}

MatmulVariant parse_matmul_variant(const std::string& token) {
  if (token == "reference") return MatmulVariant::Reference;
  if (token == "lut_fused" || token == "fused") return MatmulVariant::LutFused;
  if (token == "lut_deferred" || token == "deferred") return MatmulVariant::LutDeferred;
  throw ConfigError("unknown matmul variant '" + token + "'");
}

std::vector<float> matmul_reference(const QuantizedTensor& w, std::span<const float> x,
                                    std::size_t m, bool deterministic) {
  const auto d = check_shapes(w, x, m);
  std::vector<float> y(m * d.h_out);
  if (m == 0) return y;
  const Tensor dense = decode(w);
  for_each_row(d.h_out, deterministic, [&](std::size_t o) {
    const float* wrow = dense.data.data() + o * d.h_in;
    for (std::size_t i = 0; i < m; ++i) {
      const float* xrow = x.data() + i * d.h_in;
      float acc = 0.0f;
      for_each_segment(w, o * d.h_in, d.h_in,
                       [&](std::size_t, std::size_t, std::size_t count, std::size_t k0) {
                         float partial = 0.0f;
                         for (std::size_t k = k0; k < k0 + count; ++k) partial += wrow[k] * xrow[k];
                         acc += partial;
                       });
      y[i * d.h_out + o] = acc;
    }
  });
  return y;
}

std::vector<float> matmul_lut_fused(const QuantizedTensor& w, std::span<const float> x,
                                    std::size_t m, const LookupTable& lut, bool deterministic) {
  const auto d = check_shapes(w, x, m);
  check_lut(w, lut);
  std::vector<float> y(m * d.h_out);
  if (m == 0) return y;
  for_each_row(d.h_out, deterministic, [&](std::size_t o) {
    for (std::size_t i = 0; i < m; ++i) {
      const float* xrow = x.data() + i * d.h_in;
      float acc = 0.0f;
      for_each_segment(w, o * d.h_in, d.h_in,
                       [&](std::size_t b, std::size_t j, std::size_t count, std::size_t k0) {
                         const float scale = w.scales[b].to_float();
                         float partial = 0.0f;
                         std::size_t k = k0;
                         lut_decode(w, lut, b, j, count, [&](float c) {
                           const float wv = scale == 0.0f ? 0.0f : c * scale;
                           partial += wv * xrow[k++];
                         });
                         acc += partial;
                       });
      y[i * d.h_out + o] = acc;
    }
  });
  return y;
}

std::vector<float> matmul_lut_deferred(const QuantizedTensor& w, std::span<const float> x,
                                       std::size_t m, const LookupTable& lut,
                                       bool deterministic) {
  const auto d = check_shapes(w, x, m);
  check_lut(w, lut);
  std::vector<float> y(m * d.h_out);
  if (m == 0) return y;
  for_each_row(d.h_out, deterministic, [&](std::size_t o) {
    for (std::size_t i = 0; i < m; ++i) {
      const float* xrow = x.data() + i * d.h_in;
      float acc = 0.0f;
      for_each_segment(w, o * d.h_in, d.h_in,
                       [&](std::size_t b, std::size_t j, std::size_t count, std::size_t k0) {
                         float partial = 0.0f;
                         std::size_t k = k0;
                         lut_decode(w, lut, b, j, count,
                                    [&](float c) { partial += c * xrow[k++]; });
                         acc += w.scales[b].to_float() * partial;
                       });
      y[i * d.h_out + o] = acc;
    }
  });
  return y;
}

namespace {

Tensor as_output(std::vector<float> y, std::size_t m, std::size_t h_out) {
  Tensor t;
  t.shape = {m, h_out};
  t.data = std::move(y);
  return t;
}

std::size_t rows_of(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("activations must be a matrix [m, h_in]");
  return static_cast<std::size_t>(x.shape[0]);
}

}  // namespace

Tensor matmul_reference(const QuantizedTensor& w, const Tensor& x) {
  const auto m = rows_of(x);
  return as_output(matmul_reference(w, x.data, m), m, w.shape.at(0));
}

Tensor matmul_lut_fused(const QuantizedTensor& w, const Tensor& x, const LookupTable& lut) {
  const auto m = rows_of(x);
  return as_output(matmul_lut_fused(w, x.data, m, lut), m, w.shape.at(0));
}

Tensor matmul_lut_deferred(const QuantizedTensor& w, const Tensor& x, const LookupTable& lut) {
  const auto m = rows_of(x);
  return as_output(matmul_lut_deferred(w, x.data, m, lut), m, w.shape.at(0));
}

std::vector<float> run_matmul(const MatmulSpec& spec, const QuantizedTensor& w,
                              std::span<const float> x, const LookupTable& lut) {
  switch (spec.variant) {
    case MatmulVariant::Reference: return matmul_reference(w, x, spec.m, spec.deterministic);
    case MatmulVariant::LutFused: return matmul_lut_fused(w, x, spec.m, lut, spec.deterministic);
    case MatmulVariant::LutDeferred:
      return matmul_lut_deferred(w, x, spec.m, lut, spec.deterministic);
  }
  throw ConfigError("unknown matmul variant");
}

std::uint64_t flop_count(const MatmulSpec& spec) {
  if (spec.block_size == 0) throw ConfigError("block size must be positive");
  const std::uint64_t m = spec.m;
  const std::uint64_t weights = static_cast<std::uint64_t>(spec.h_out) * spec.h_in;
  const std::uint64_t mac = 2 * m * weights;
  if (spec.variant == MatmulVariant::LutDeferred) {
    const std::uint64_t blocks_per_row = (spec.h_in + spec.block_size - 1) / spec.block_size;
    return mac + 2 * m * spec.h_out * blocks_per_row;
  }
  return mac + weights;
}

}  // namespace lowbit
