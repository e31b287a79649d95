#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace lowbit {

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using GradientObjective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
  std::size_t max_iters = 500;
  std::size_t memory = 10;
  double gtol = 1e-9;   // infinity-norm of the gradient
  double ftol = 1e-15;  // relative decrease between iterations
  // Strong Wolfe constants.
  double c1 = 1e-4;
  double c2 = 0.9;
  std::size_t max_line_search = 40;
};

enum class LbfgsStatus { GradientTolerance, FunctionTolerance, MaxIterations, LineSearchFailed,
                         NonFinite };

struct LbfgsResult {
  std::vector<double> x;
  double f = 0.0;
  std::size_t iters = 0;
  std::size_t evaluations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;

  bool converged() const noexcept {
    return status == LbfgsStatus::GradientTolerance || status == LbfgsStatus::FunctionTolerance;
  }
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing plus
/// cubic-interpolation zoom).
LbfgsResult lbfgs_minimize(const GradientObjective& fn, std::vector<double> x0,
                           const LbfgsOptions& opts = {});

}  // namespace lowbit
