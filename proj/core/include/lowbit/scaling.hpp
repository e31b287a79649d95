#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lowbit/tensor.hpp"

namespace lowbit {

/// Precision-aware scaling law
///   L(N, D, P) = A * (N * f(P))^-alpha + B * D^-beta + E,
///   f(P) = 1 - exp(-P / gamma_w).
/// N and D are measured in billions wherever these parameters are fitted.
struct ScalingParams {
  double A = 0.0;
  double B = 0.0;
  double E = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma_w = 0.0;

  void validate() const;
};

/// Unconstrained fit coordinates: a = log A, b = log B, e = log E and the
/// softplus-preimages of alpha, beta and gamma_w.
using RawParams = std::array<double, 6>;

double softplus(double x) noexcept;
double softplus_inverse(double y);
RawParams to_raw(const ScalingParams& p);
ScalingParams from_raw(const RawParams& raw) noexcept;

double f_capacity(double bits, double gamma_w);

/// Predicted log loss evaluated as a log-sum-exp of the three terms.
double predict_log_loss(const RawParams& raw, double n, double d, double bits);
double predict_loss(const ScalingParams& params, double n, double d, double bits);

double huber(double r, double delta);
double huber_derivative(double r, double delta) noexcept;

/// One run in fitting units: N and D in billions.
struct ScalingObservation {
  double n = 0.0;
  double d = 0.0;
  double bits = 0.0;
  double loss = 0.0;
};

std::vector<ScalingObservation> to_observations(std::span<const RunRecord> runs);

/// Sum of Huber losses of the log-residuals; `grad` (size 6, optional)
/// receives the analytic gradient with respect to the raw coordinates.
double huber_objective(const RawParams& raw, std::span<const ScalingObservation> obs,
                       double delta, std::span<double> grad = {});

/// Max relative error between the analytic gradient and central finite
/// differences (step `h` in raw coordinates). Per component the error is
/// |g_a - g_fd| / max(|g_a|, |g_fd|, floor).
double gradient_check(const RawParams& raw, std::span<const ScalingObservation> obs, double delta,
                      double h = 1e-6, double floor = 1e-6);

struct FitConfig {
  double huber_delta = 1e-3;
  std::vector<double> a_grid{0, 2, 4, 6, 8};
  std::vector<double> b_grid{0, 2, 4, 6, 8};
  std::vector<double> e_grid{-1, 0, 1};
  std::vector<double> alpha_grid{0.25, 0.5, 1.0, 1.5};
  std::vector<double> beta_grid{0.25, 0.5, 1.0, 1.5};
  std::vector<double> gamma_grid{1, 2, 4, 8};
  std::size_t max_iters = 500;
  double gtol = 1e-9;

  void validate() const;
  std::size_t start_count() const;
};

struct FitReport {
  ScalingParams params;
  double r2 = 0.0;  // on log loss
  double r2_natural = 0.0;
  double rmse_log = 0.0;
  double rmse_natural = 0.0;
  double objective = 0.0;
  std::size_t starts_tried = 0;
  std::size_t starts_converged = 0;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

FitReport fit(std::span<const ScalingObservation> obs, const FitConfig& cfg = {});
FitReport fit(std::span<const RunRecord> runs, const FitConfig& cfg = {});

/// Goodness of fit of `params` on `obs` (objective, R^2, RMSE); no fitting.
FitReport evaluate_fit(const ScalingParams& params, std::span<const ScalingObservation> obs,
                       double delta);

}  // namespace lowbit
