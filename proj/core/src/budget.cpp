#include "lowbit/budget.hpp"

#include <cmath>
#include <cstdio>

#include "lowbit/errors.hpp"

namespace lowbit {

namespace {

constexpr double kBitsPerByte = 8.0;
constexpr double kHighBits = 16.0;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double g_density(double bits, double gamma_w) {
  return f_capacity(bits, gamma_w) / bits;
}

void ArchLaw::validate() const {
  if (!(vocab > 0.0 && d0 > 0.0 && n0_billions > 0.0)) {
    throw DomainError("ArchLaw: sizes must be positive");
  }
  if (!(alpha_d > 0.0 && alpha_d < 1.0)) throw DomainError("ArchLaw: alpha_d must be in (0, 1)");
}

double embedding_params(double n_billions, const ArchLaw& law) {
  law.validate();
  if (!(n_billions > 0.0) || !std::isfinite(n_billions)) {
    throw DomainError("embedding_params: N must be positive");
  }
  const double copies = law.untied ? 2.0 : 1.0;
  const double d = law.d0 * std::pow(n_billions / law.n0_billions, law.alpha_d);
  return copies * law.vocab * d * 1e-9;
}

double BudgetSolution::residual() const {
  const double m_gb = kBitsPerByte * memory_gb;
  return std::abs(bits * n_billions + (kHighBits - bits) * e_billions - m_gb) / m_gb;
}

BudgetSolution solve_n(double bits, double memory_gb, double gamma_w, const ArchLaw& law) {
  if (!(bits >= 1.0 && bits <= kHighBits)) throw DomainError("solve_n: P_w must be in [1, 16]");
  if (!(memory_gb > 0.0) || !std::isfinite(memory_gb)) {
    throw DomainError("solve_n: memory budget must be positive");
  }
  law.validate();
  const double m_gb = kBitsPerByte * memory_gb;
  auto used = [&](double n) {
    return bits * n + (kHighBits - bits) * embedding_params(n, law);
  };
  // used() is increasing in N and tends to 0 as N -> 0.
  double lo = 0.0;
  double hi = 2.0 * m_gb / bits;
  for (int i = 0; i < 400 && (hi - lo) > 1e-10 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (used(mid) <= m_gb ? lo : hi) = mid;
  }
  const double n = 0.5 * (lo + hi);
  BudgetSolution s;
  s.bits = bits;
  s.memory_gb = memory_gb;
  s.n_billions = n;
  s.e_billions = embedding_params(n, law);
  if (!(n > s.e_billions)) {
    throw Infeasible("budget of " + fmt(memory_gb) + " GB leaves no room for backbone weights at " +
                     fmt(bits) + " bits");
  }
  s.density = f_capacity(bits, gamma_w) * n / m_gb;
  return s;
}

BudgetSolution optimal_bits(double memory_gb, double gamma_w, std::span<const double> candidates,
                            const ArchLaw& law) {
  if (candidates.empty()) throw DomainError("optimal_bits: no candidate bit-widths");
  bool have = false;
  BudgetSolution best;
  for (double p : candidates) {
    const auto s = solve_n(p, memory_gb, gamma_w, law);
    if (!have || s.density > best.density || (s.density == best.density && p < best.bits)) {
      best = s;
      have = true;
    }
  }
  return best;
}

std::string budget_csv_header() { return "P_w,M_GB,N_billions,E_billions,density"; }

std::string budget_csv_row(const BudgetSolution& s) {
  return fmt(s.bits) + "," + fmt(s.memory_gb) + "," + fmt(s.n_billions) + "," +
         fmt(s.e_billions) + "," + fmt(s.density);
}

std::vector<IsolossCell> isoloss_grid(const ScalingParams& uniform, const ScalingParams& kmeans,
                                      const IsolossSpec& spec) {
  uniform.validate();
  kmeans.validate();
  if (!(spec.fixed > 0.0)) throw DomainError("isoloss: fixed axis value must be positive");
  std::vector<IsolossCell> cells;
  cells.reserve(spec.bits.size() * spec.x_values.size());
  for (double p : spec.bits) {
    for (double x : spec.x_values) {
      const double n = spec.axis == IsolossAxis::N ? x : spec.fixed;
      const double d = spec.axis == IsolossAxis::N ? spec.fixed : x;
      IsolossCell c;
      c.bits = p;
      c.x = x;
      c.loss_uniform = predict_loss(uniform, n, d, p);
      c.loss_kmeans = predict_loss(kmeans, n, d, p);
      c.gap = c.loss_uniform - c.loss_kmeans;
      cells.push_back(c);
    }
  }
  return cells;
}

std::string isoloss_csv(std::span<const IsolossCell> cells) {
  std::string out = "P_w,x_axis_value,loss_uniform,loss_kmeans,gap\n";
  for (const auto& c : cells) {
    out += fmt(c.bits) + "," + fmt(c.x) + "," + fmt(c.loss_uniform) + "," + fmt(c.loss_kmeans) +
           "," + fmt(c.gap) + "\n";
  }
  return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> v;
  if (count == 0) return v;
  if (count == 1) return {lo};
  v.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    v.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return v;
}

}  // namespace lowbit
