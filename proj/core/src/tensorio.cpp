#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lowbit/byteio.hpp"
#include "lowbit/errors.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit {

namespace {

constexpr char kTensorMagic[4] = {'Q', 'T', 'N', '1'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr const char* kRunsHeader = "format,n_params,tokens,bits_per_weight,loss";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_number(std::string_view field, std::size_t line, const char* name) {
  field = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError("runs line " + std::to_string(line) + ": cannot parse " + name +
                    " '" + std::string(field) + "'");
  }
  if (!std::isfinite(v) || v <= 0.0) {
    throw DataError("runs line " + std::to_string(line) + ": " + name +
                    " must be positive, got '" + std::string(field) + "'");
  }
  return v;
}

std::uint64_t parse_count(std::string_view field, std::size_t line, const char* name) {
  const double v = parse_number(field, line, name);
  if (v != std::floor(v) || v >= 1.8e19) {
    throw DataError("runs line " + std::to_string(line) + ": " + name +
                    " must be a whole count");
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace

Tensor::Tensor(std::vector<std::uint64_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  validate();
}

std::uint64_t shape_numel(std::span<const std::uint64_t> shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void Tensor::validate() const {
  if (shape.empty()) throw ShapeError("tensor must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape product " + std::to_string(shape_numel(shape)) +
                     " does not match payload length " + std::to_string(data.size()));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw DataError("tensor element " + std::to_string(i) + " is not finite");
    }
  }
}

std::string to_string(FormatKind kind) {
  return kind == FormatKind::Uniform ? "uniform" : "kmeans";
}

FormatKind parse_format_kind(const std::string& token) {
  if (token == "uniform") return FormatKind::Uniform;
  if (token == "kmeans") return FormatKind::KMeans;
  throw DataError("unknown format '" + token + "' (expected uniform or kmeans)");
}

std::vector<std::uint8_t> serialize_tensor(const Tensor& t) {
  t.validate();
  if (t.rank() > 255) throw ShapeError("tensor rank exceeds 255");
  detail::ByteWriter w;
  w.bytes(kTensorMagic, 4);
  w.u8(kDtypeF32);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape) w.u64(d);
  for (float v : t.data) w.f32(v);
  return std::move(w.buffer());
}

Tensor deserialize_tensor(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "QTN1");
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kTensorMagic)) {
    throw FormatError("QTN1: bad magic");
  }
  const auto dtype = r.u8();
  if (dtype != kDtypeF32) {
    throw FormatError("QTN1: unsupported dtype code " + std::to_string(dtype));
  }
  const auto rank = r.u8();
  if (rank == 0) throw FormatError("QTN1: rank must be >= 1");
  Tensor t;
  t.shape.resize(rank);
  for (auto& d : t.shape) {
    d = r.u64();
    if (d == 0) throw FormatError("QTN1: zero dimension");
  }
  const std::uint64_t n = shape_numel(t.shape);
  if (n > r.remaining() / 4) throw FormatError("QTN1: truncated payload");
  t.data.resize(n);
  for (auto& v : t.data) v = r.f32();
  if (r.remaining() != 0) throw FormatError("QTN1: trailing bytes after payload");
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      throw DataError("QTN1: element " + std::to_string(i) + " is not finite");
    }
  }
  return t;
}

Tensor load_tensor(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return deserialize_tensor(bytes);
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  detail::write_file(path, serialize_tensor(t));
}

std::vector<RunRecord> parse_runs(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<RunRecord> runs;
  while (std::getline(in, line)) {
    ++lineno;
    const auto row = trim(line);
    if (row.empty()) continue;
    if (!have_header) {
      if (row != kRunsHeader) {
        throw FormatError("runs CSV: expected header '" + std::string(kRunsHeader) + "'");
      }
      have_header = true;
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = row.find(',', start);
      fields.push_back(row.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) {
      throw FormatError("runs line " + std::to_string(lineno) + ": expected 5 fields, got " +
                        std::to_string(fields.size()));
    }
    RunRecord rec;
    rec.format = parse_format_kind(std::string(trim(fields[0])));
    rec.n_params = parse_count(fields[1], lineno, "n_params");
    rec.tokens = parse_count(fields[2], lineno, "tokens");
    rec.bits_per_weight = parse_number(fields[3], lineno, "bits_per_weight");
    rec.loss = parse_number(fields[4], lineno, "loss");
    runs.push_back(rec);
  }
  if (!have_header) throw FormatError("runs CSV: missing header");
  return runs;
}

std::vector<RunRecord> load_runs(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return parse_runs(std::string(bytes.begin(), bytes.end()));
}

std::string format_runs(std::span<const RunRecord> runs) {
  std::ostringstream out;
  out.precision(17);
  out << kRunsHeader << '\n';
  for (const auto& r : runs) {
    out << to_string(r.format) << ',' << r.n_params << ',' << r.tokens << ','
        << r.bits_per_weight << ',' << r.loss << '\n';
  }
  return out.str();
}

void save_runs(std::span<const RunRecord> runs, const std::filesystem::path& path) {
  const auto text = format_runs(runs);
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                     text.size()));
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

}  // namespace detail
}  // namespace lowbit
