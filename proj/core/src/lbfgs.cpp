#include "lowbit/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace lowbit {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

struct LinePoint {
  double t = 0.0;
  double f = 0.0;
  double d = 0.0;  // directional derivative
  std::vector<double> x;
  std::vector<double> g;
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), clamped
// to the interior of the interval.
double cubic_step(const LinePoint& a, const LinePoint& b) {
  const double d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.t - b.t);
  const double disc = d1 * d1 - a.d * b.d;
  const double lo = std::min(a.t, b.t);
  const double hi = std::max(a.t, b.t);
  double t = 0.5 * (a.t + b.t);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b.t - a.t);
    const double denom = b.d - a.d + 2.0 * d2;
    if (denom != 0.0) t = b.t - (b.t - a.t) * (b.d + d2 - d1) / denom;
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (lo + hi);
  return t;
}

class LineSearch {
 public:
  LineSearch(const GradientObjective& fn, const LbfgsOptions& opts, std::span<const double> x,
             std::span<const double> dir, double f0, double d0, std::size_t& evals)
      : fn_(fn), opts_(opts), x_(x), dir_(dir), f0_(f0), d0_(d0), evals_(evals) {}

  bool run(double t0, LinePoint& out) {
    LinePoint prev{0.0, f0_, d0_, {}, {}};
    double t = t0;
    for (std::size_t i = 0; i < opts_.max_line_search; ++i) {
      LinePoint cur = eval(t);
      if (!std::isfinite(cur.f)) {
        t = 0.5 * (prev.t + t);
        continue;
      }
      if (cur.f > f0_ + opts_.c1 * t * d0_ || (i > 0 && cur.f >= prev.f)) {
        return zoom(prev, cur, out);
      }
      if (std::abs(cur.d) <= -opts_.c2 * d0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.d >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      t *= 2.0;
    }
    return false;
  }

 private:
  LinePoint eval(double t) {
    LinePoint p;
    p.t = t;
    p.x.resize(x_.size());
    p.g.resize(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) p.x[i] = x_[i] + t * dir_[i];
    p.f = fn_(p.x, p.g);
    ++evals_;
    p.d = dot(p.g, dir_);
    return p;
  }

  bool zoom(LinePoint lo, LinePoint hi, LinePoint& out) {
    for (std::size_t i = 0; i < opts_.max_line_search; ++i) {
      if (std::abs(hi.t - lo.t) < 1e-16 * std::max(1.0, lo.t)) break;
      LinePoint mid = eval(cubic_step(lo, hi));
      if (!std::isfinite(mid.f) || mid.f > f0_ + opts_.c1 * mid.t * d0_ || mid.f >= lo.f) {
        hi = std::move(mid);
        continue;
      }
      if (std::abs(mid.d) <= -opts_.c2 * d0_) {
        out = std::move(mid);
        return true;
      }
      if (mid.d * (hi.t - lo.t) >= 0.0) hi = lo;
      lo = std::move(mid);
    }
    // Accept the best sufficient-decrease point found, if any.
    if (lo.t > 0.0 && !lo.x.empty()) {
      out = std::move(lo);
      return true;
    }
    return false;
  }

  const GradientObjective& fn_;
  const LbfgsOptions& opts_;
  std::span<const double> x_;
  std::span<const double> dir_;
  double f0_;
  double d0_;
  std::size_t& evals_;
};

}  // namespace

LbfgsResult lbfgs_minimize(const GradientObjective& fn, std::vector<double> x0,
                           const LbfgsOptions& opts) {
  const std::size_t n = x0.size();
  LbfgsResult r;
  r.x = std::move(x0);
  std::vector<double> g(n);
  r.f = fn(r.x, g);
  r.evaluations = 1;
  if (!std::isfinite(r.f)) {
    r.status = LbfgsStatus::NonFinite;
    return r;
  }

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> dir(n), alpha(opts.memory);

  for (r.iters = 0; r.iters < opts.max_iters; ++r.iters) {
    if (inf_norm(g) <= opts.gtol) {
      r.status = LbfgsStatus::GradientTolerance;
      return r;
    }
    // Two-loop recursion.
    for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
    const std::size_t m = s_hist.size();
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[k] * y_hist[k][i];
    }
    if (m > 0) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (auto& v : dir) v *= gamma;
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] += s_hist[k][i] * (alpha[k] - beta);
    }
    double d0 = dot(g, dir);
    if (!(d0 < 0.0)) {
      // Not a descent direction: restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
      d0 = dot(g, dir);
    }
    const double t0 = m == 0 ? std::min(1.0, 1.0 / std::max(inf_norm(g), 1e-300)) : 1.0;

    LinePoint next;
    LineSearch ls(fn, opts, r.x, dir, r.f, d0, r.evaluations);
    if (!ls.run(t0, next)) {
      r.status = LbfgsStatus::LineSearchFailed;
      return r;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = next.x[i] - r.x[i];
      y[i] = next.g[i] - g[i];
    }
    const double sy = dot(s, y);
    const double f_prev = r.f;
    r.x = std::move(next.x);
    g = std::move(next.g);
    r.f = next.f;
    if (sy > 1e-300) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    if ((f_prev - r.f) <= opts.ftol * std::max({std::abs(f_prev), std::abs(r.f), 1e-300})) {
      r.status = inf_norm(g) <= opts.gtol ? LbfgsStatus::GradientTolerance
                                          : LbfgsStatus::FunctionTolerance;
      ++r.iters;
      return r;
    }
  }
  r.status = LbfgsStatus::MaxIterations;
  return r;
}

}  // namespace lowbit
