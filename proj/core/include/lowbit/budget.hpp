#pragma once

#include <span>
#include <string>
#include <vector>

#include "lowbit/scaling.hpp"

namespace lowbit {

/// Effective capacity per stored bit, f(P; gamma_w) / P.
double g_density(double bits, double gamma_w);

/// Hidden size as a function of parameter count, d(N) = d0 * (N / N0)^alpha_d,
/// with untied input embedding and LM head kept in 16 bit.
struct ArchLaw {
  double vocab = 128256.0;
  double d0 = 3072.0;
  double n0_billions = 3.883551744;
  double alpha_d = 0.320;
  bool untied = true;

  void validate() const;
};

/// Embedding + head parameters in billions for a model of `n_billions`.
double embedding_params(double n_billions, const ArchLaw& law = {});

struct BudgetSolution {
  double bits = 0.0;
  double memory_gb = 0.0;
  double n_billions = 0.0;
  double e_billions = 0.0;
  double density = 0.0;  // f(P) * N / M, per gigabit

  /// |P N + (16 - P) E(N) - M_Gb| / M_Gb
  double residual() const;
};

/// Largest N with P*N + (16-P)*E(N) = 8*M_GB (gigabits), by bisection.
BudgetSolution solve_n(double bits, double memory_gb, double gamma_w, const ArchLaw& law = {});

/// Candidate maximizing density; ties go to the smaller bit-width.
BudgetSolution optimal_bits(double memory_gb, double gamma_w, std::span<const double> candidates,
                            const ArchLaw& law = {});

std::string budget_csv_header();
std::string budget_csv_row(const BudgetSolution& s);

enum class IsolossAxis { N, D };

struct IsolossSpec {
  IsolossAxis axis = IsolossAxis::N;
  double fixed = 50.3;            // the other of N / D, in billions
  std::vector<double> x_values;   // billions
  std::vector<double> bits;
};

struct IsolossCell {
  double bits = 0.0;
  double x = 0.0;
  double loss_uniform = 0.0;
  double loss_kmeans = 0.0;
  double gap = 0.0;  // uniform - kmeans
};

/// Row-major over bits (outer) and x (inner).
std::vector<IsolossCell> isoloss_grid(const ScalingParams& uniform, const ScalingParams& kmeans,
                                      const IsolossSpec& spec);
std::string isoloss_csv(std::span<const IsolossCell> cells);

/// `count` evenly spaced values over [lo, hi]; count == 1 gives lo.
std::vector<double> linspace(double lo, double hi, std::size_t count);

}  // namespace lowbit
