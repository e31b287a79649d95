#include "lowbit/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "lowbit/errors.hpp"
#include "lowbit/lbfgs.hpp"

namespace lowbit {

namespace {

constexpr double kBillion = 1e9;

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log f(P) = log(1 - exp(-P/gamma)) and its derivative in gamma.
struct LogCapacity {
  double value;
  double d_gamma;
};

LogCapacity log_capacity(double bits, double gamma) {
  const double u = bits / gamma;
  const double one_minus = -std::expm1(-u);  // f(P)
  const double value = std::log(one_minus);
  // d/dgamma log f = -(P / gamma^2) exp(-u) / f
  const double d_gamma = -(bits / (gamma * gamma)) * std::exp(-u) / one_minus;
  return {value, d_gamma};
}

struct Terms {
  std::array<double, 3> t;
  double lse;
  std::array<double, 3> w;  // softmax weights
};

Terms lse_terms(double t1, double t2, double t3) {
  Terms r{{t1, t2, t3}, 0.0, {0.0, 0.0, 0.0}};
  const double m = std::max({t1, t2, t3});
  if (m == -std::numeric_limits<double>::infinity()) {
    r.lse = m;
    return r;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    r.w[i] = std::exp(r.t[i] - m);
    s += r.w[i];
  }
  for (auto& w : r.w) w /= s;
  r.lse = m + std::log(s);
  return r;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(name) + " must be positive and finite");
  }
}

}  // namespace

void ScalingParams::validate() const {
  for (double v : {A, B, E, alpha, beta, gamma_w}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError("scaling parameters must all be positive and finite");
    }
  }
}

double softplus(double x) noexcept {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_inverse(double y) {
  require_positive(y, "softplus_inverse argument");
  // log(exp(y) - 1), stable for large y.
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

RawParams to_raw(const ScalingParams& p) {
  return {std::log(p.A),
          std::log(p.B),
          std::log(p.E),
          softplus_inverse(p.alpha),
          softplus_inverse(p.beta),
          softplus_inverse(p.gamma_w)};
}

ScalingParams from_raw(const RawParams& raw) noexcept {
  return {std::exp(raw[0]), std::exp(raw[1]), std::exp(raw[2]),
          softplus(raw[3]), softplus(raw[4]), softplus(raw[5])};
}

double f_capacity(double bits, double gamma_w) {
  require_positive(bits, "P_w");
  require_positive(gamma_w, "gamma_w");
  return -std::expm1(-bits / gamma_w);
}

double predict_log_loss(const RawParams& raw, double n, double d, double bits) {
  require_positive(n, "N");
  require_positive(d, "D");
  require_positive(bits, "P_w");
  const double alpha = softplus(raw[3]);
  const double beta = softplus(raw[4]);
  const double gamma = softplus(raw[5]);
  const auto lf = log_capacity(bits, gamma);
  return lse_terms(raw[0] - alpha * (std::log(n) + lf.value), raw[1] - beta * std::log(d), raw[2])
      .lse;
}

double predict_loss(const ScalingParams& p, double n, double d, double bits) {
  require_positive(n, "N");
  require_positive(d, "D");
  require_positive(bits, "P_w");
  if (!(p.A >= 0.0 && p.B >= 0.0 && p.E > 0.0 && p.alpha > 0.0 && p.beta > 0.0 &&
        p.gamma_w > 0.0)) {
    throw DomainError("scaling parameters must be positive (A and B may be zero)");
  }
  const auto lf = log_capacity(bits, p.gamma_w);
  const double t1 = std::log(p.A) - p.alpha * (std::log(n) + lf.value);
  const double t2 = std::log(p.B) - p.beta * std::log(d);
  return std::exp(lse_terms(t1, t2, std::log(p.E)).lse);
}

double huber(double r, double delta) {
  if (!(delta > 0.0)) throw DomainError("Huber delta must be positive");
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_derivative(double r, double delta) noexcept {
  return std::clamp(r, -delta, delta);
}

std::vector<ScalingObservation> to_observations(std::span<const RunRecord> runs) {
  std::vector<ScalingObservation> obs;
  obs.reserve(runs.size());
  for (const auto& r : runs) {
    obs.push_back({static_cast<double>(r.n_params) / kBillion,
                   static_cast<double>(r.tokens) / kBillion, r.bits_per_weight, r.loss});
  }
  return obs;
}

double huber_objective(const RawParams& raw, std::span<const ScalingObservation> obs,
                       double delta, std::span<double> grad) {
  const double alpha = softplus(raw[3]);
  const double beta = softplus(raw[4]);
  const double gamma = softplus(raw[5]);
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (const auto& o : obs) {
    const auto lf = log_capacity(o.bits, gamma);
    const double log_neff = std::log(o.n) + lf.value;
    const double log_d = std::log(o.d);
    const auto terms = lse_terms(raw[0] - alpha * log_neff, raw[1] - beta * log_d, raw[2]);
    const double r = terms.lse - std::log(o.loss);
    total += huber(r, delta);
    if (!want_grad) continue;
    const double h = huber_derivative(r, delta);
    const auto& w = terms.w;
    grad[0] += h * w[0];
    grad[1] += h * w[1];
    grad[2] += h * w[2];
    grad[3] += h * w[0] * (-log_neff) * sigmoid(raw[3]);
    grad[4] += h * w[1] * (-log_d) * sigmoid(raw[4]);
    grad[5] += h * w[0] * (-alpha * lf.d_gamma) * sigmoid(raw[5]);
  }
  return total;
}

double gradient_check(const RawParams& raw, std::span<const ScalingObservation> obs, double delta,
                      double h, double floor) {
  std::array<double, 6> analytic{};
  huber_objective(raw, obs, delta, analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    RawParams up = raw, down = raw;
    up[i] += h;
    down[i] -= h;
    const double fd =
        (huber_objective(up, obs, delta) - huber_objective(down, obs, delta)) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd), floor});
    worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
  }
  return worst;
}

void FitConfig::validate() const {
  if (!(huber_delta > 0.0)) throw ConfigError("huber delta must be positive");
  for (const auto* g : {&a_grid, &b_grid, &e_grid, &alpha_grid, &beta_grid, &gamma_grid}) {
    if (g->empty()) throw ConfigError("multistart grids must be non-empty");
  }
  for (const auto* g : {&alpha_grid, &beta_grid, &gamma_grid}) {
    for (double v : *g) {
      if (!(v > 0.0)) throw ConfigError("exponent and gamma start values must be positive");
    }
  }
}

std::size_t FitConfig::start_count() const {
  return a_grid.size() * b_grid.size() * e_grid.size() * alpha_grid.size() * beta_grid.size() *
         gamma_grid.size();
}

FitReport evaluate_fit(const ScalingParams& params, std::span<const ScalingObservation> obs,
                       double delta) {
  params.validate();
  FitReport rep;
  rep.params = params;
  const auto raw = to_raw(params);
  rep.objective = huber_objective(raw, obs, delta);
  if (obs.empty()) return rep;
  double mean_log = 0.0, mean_nat = 0.0;
  for (const auto& o : obs) {
    mean_log += std::log(o.loss);
    mean_nat += o.loss;
  }
  mean_log /= static_cast<double>(obs.size());
  mean_nat /= static_cast<double>(obs.size());
  double ss_res = 0.0, ss_tot = 0.0, ss_res_nat = 0.0, ss_tot_nat = 0.0;
  for (const auto& o : obs) {
    const double pred_log = predict_log_loss(raw, o.n, o.d, o.bits);
    const double y = std::log(o.loss);
    ss_res += (pred_log - y) * (pred_log - y);
    ss_tot += (y - mean_log) * (y - mean_log);
    const double pred = std::exp(pred_log);
    ss_res_nat += (pred - o.loss) * (pred - o.loss);
    ss_tot_nat += (o.loss - mean_nat) * (o.loss - mean_nat);
  }
  const double n = static_cast<double>(obs.size());
  rep.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  rep.r2_natural = ss_tot_nat > 0.0 ? 1.0 - ss_res_nat / ss_tot_nat : (ss_res_nat == 0.0 ? 1.0 : 0.0);
  rep.rmse_log = std::sqrt(ss_res / n);
  rep.rmse_natural = std::sqrt(ss_res_nat / n);
  return rep;
}

FitReport fit(std::span<const ScalingObservation> obs, const FitConfig& cfg) {
  cfg.validate();
  if (obs.empty()) throw DataError("fit: no runs");
  for (const auto& o : obs) {
    require_positive(o.n, "N");
    require_positive(o.d, "D");
    require_positive(o.bits, "P_w");
    require_positive(o.loss, "loss");
  }
  std::vector<std::string> warnings;
  {
    std::set<double> ns, ds, ps;
    for (const auto& o : obs) {
      ns.insert(o.n);
      ds.insert(o.d);
      ps.insert(o.bits);
    }
    if (obs.size() < 7 || ns.size() < 2 || ds.size() < 2 || ps.size() < 2) {
      warnings.push_back(
          "IllConditioned: need >= 7 runs with >= 2 distinct values of each of N, D, P_w");
    }
  }

  const GradientObjective objective = [&](std::span<const double> x, std::span<double> g) {
    RawParams raw;
    std::copy(x.begin(), x.end(), raw.begin());
    return huber_objective(raw, obs, cfg.huber_delta, g);
  };
  LbfgsOptions opts;
  opts.max_iters = cfg.max_iters;
  opts.gtol = cfg.gtol;

  bool have_best = false;
  RawParams best{};
  double best_f = std::numeric_limits<double>::infinity();
  std::size_t tried = 0, converged = 0;
  for (double a : cfg.a_grid)
    for (double b : cfg.b_grid)
      for (double e : cfg.e_grid)
        for (double al : cfg.alpha_grid)
          for (double be : cfg.beta_grid)
            for (double ga : cfg.gamma_grid) {
              ++tried;
              std::vector<double> x0{a, b, e, softplus_inverse(al), softplus_inverse(be),
                                     softplus_inverse(ga)};
              const auto res = lbfgs_minimize(objective, std::move(x0), opts);
              if (res.converged()) ++converged;
              if (!std::isfinite(res.f)) continue;
              if (res.f < best_f) {
                best_f = res.f;
                std::copy(res.x.begin(), res.x.end(), best.begin());
                have_best = true;
              }
            }
  if (!have_best || converged == 0) {
    throw FitFailed("scaling fit: no start converged (" + std::to_string(tried) + " tried)");
  }
  auto rep = evaluate_fit(from_raw(best), obs, cfg.huber_delta);
  rep.objective = best_f;
  rep.starts_tried = tried;
  rep.starts_converged = converged;
  rep.warnings = std::move(warnings);
  return rep;
}

FitReport fit(std::span<const RunRecord> runs, const FitConfig& cfg) {
  const auto obs = to_observations(runs);
  return fit(obs, cfg);
}

std::string FitReport::to_json() const {
  nlohmann::ordered_json j;
  j["A"] = params.A;
  j["B"] = params.B;
  j["E"] = params.E;
  j["alpha"] = params.alpha;
  j["beta"] = params.beta;
  j["gamma_w"] = params.gamma_w;
  j["r2"] = r2;
  j["rmse_log"] = rmse_log;
  j["rmse_natural"] = rmse_natural;
  j["r2_natural"] = r2_natural;
  j["objective"] = objective;
  j["starts_tried"] = starts_tried;
  j["starts_converged"] = starts_converged;
  j["units"] = "N and D in billions";
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace lowbit
