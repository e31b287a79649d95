#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lowbit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated binary/CSV input.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input carrying invalid values (NaN, negative counts, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration, e.g. a k-means format without centroids.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a model function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Valid request the implementation does not support (e.g. 3-bit packing).
class Unsupported : public Error {
 public:
  using Error::Error;
};

/// No solution exists for a memory budget.
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// Optimizer failed to converge from every start.
class FitFailed : public Error {
 public:
  using Error::Error;
};

/// Toy training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace lowbit
