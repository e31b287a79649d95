#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lowbit {

/// Dense row-major float32 tensor. Every dimension is positive and every
/// element finite; `validate()` checks both.
struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::uint64_t> shape_, std::vector<float> data_);

  std::size_t numel() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }

  /// Throws DataError on non-finite elements, ShapeError on a bad shape.
  void validate() const;

  bool operator==(const Tensor&) const = default;
};

std::uint64_t shape_numel(std::span<const std::uint64_t> shape);

enum class FormatKind : std::uint8_t { Uniform = 0, KMeans = 1 };

std::string to_string(FormatKind kind);
FormatKind parse_format_kind(const std::string& token);

/// One observed training run of the scaling grid.
struct RunRecord {
  FormatKind format = FormatKind::Uniform;
  std::uint64_t n_params = 0;
  std::uint64_t tokens = 0;
  double bits_per_weight = 0.0;
  double loss = 0.0;

  bool operator==(const RunRecord&) const = default;
};

// QTN1 tensor files:
//   "QTN1" | u8 dtype (0 = f32) | u8 rank | rank x u64 dims | f32 payload
// All integers and floats little-endian.
Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor& t, const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_tensor(const Tensor& t);
Tensor deserialize_tensor(std::span<const std::uint8_t> bytes);

// Runs CSV with mandatory header `format,n_params,tokens,bits_per_weight,loss`.
std::vector<RunRecord> load_runs(const std::filesystem::path& path);
std::vector<RunRecord> parse_runs(const std::string& text);
void save_runs(std::span<const RunRecord> runs, const std::filesystem::path& path);
std::string format_runs(std::span<const RunRecord> runs);

}  // namespace lowbit
