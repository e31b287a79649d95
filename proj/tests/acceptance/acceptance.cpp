// Acceptance checks: one PASS/FAIL line per criterion.
//   lowbit_acceptance                 run all
//   lowbit_acceptance --criterion N   run one
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lowbit/budget.hpp"
#include "lowbit/formats.hpp"
#include "lowbit/kernels.hpp"
#include "lowbit/kmeans.hpp"
#include "lowbit/packing.hpp"
#include "lowbit/perfmodel.hpp"
#include "lowbit/qat.hpp"
#include "lowbit/scaling.hpp"
#include "lowbit/tensor.hpp"

using namespace lowbit;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
  void note(const std::string& s) {
    if (!pass) return;
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string num(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<float> normal_floats(std::mt19937_64& rng, std::size_t n, float sd = 1.0f) {
  std::normal_distribution<float> nd(0.0f, sd);
  std::vector<float> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

// 1 -------------------------------------------------------------------------
Outcome bit_width_table() {
  Outcome o;
  const char* expected[] = {"1.83", "3.06", "4.16", "5.22", "6.23", "7.24", "8.24"};
  std::string row;
  for (unsigned n = 2; n <= 8; ++n) {
    const std::string got = num(bit_width(QuantFormat::uniform(n)), "%.2f");
    row += (row.empty() ? "" : " ") + got;
    if (got != expected[n - 2]) {
      o.fail("uniform n=" + std::to_string(n) + " gives " + got + " (log2(" +
             std::to_string((1u << n) - 1) + ")+0.25 = " +
             num(bit_width(QuantFormat::uniform(n)), "%.4f") + "), expected " + expected[n - 2]);
    }
  }
  for (unsigned n = 1; n <= 8; ++n) {
    if (bit_width(QuantFormat::kmeans(n)) != n + 0.25) {
      o.fail("kmeans n=" + std::to_string(n) + " is not n+0.25");
    }
  }
  o.note("uniform row " + row + "; kmeans n+0.25 exact for n=1..8");
  if (!o.pass) o.detail += " [row: " + row + "]";
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome codec_round_trips() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::size_t lists = 0;
  for (unsigned n : {1u, 2u, 4u, 8u}) {
    for (int i = 0; i < 100000; ++i) {
      std::vector<std::uint8_t> codes(1 + rng() % 128);
      for (auto& c : codes) c = static_cast<std::uint8_t>(rng() & ((1u << n) - 1));
      if (unpack_codes(pack_codes(codes, n), n, codes.size()) != codes) {
        o.fail("pack/unpack mismatch at n=" + std::to_string(n));
        return o;
      }
      ++lists;
    }
  }
  const auto dir = std::filesystem::temp_directory_path();
  std::size_t files = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::uint64_t> shape{1 + rng() % 9, 1 + rng() % 150};
    Tensor t(shape, normal_floats(rng, shape_numel(shape), 0.05f));
    save_tensor(t, dir / "lowbit_acc.qtn");
    const auto back = load_tensor(dir / "lowbit_acc.qtn");
    if (back.shape != t.shape ||
        std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)) != 0) {
      o.fail("QTN1 round trip differs");
    }
    const unsigned n = 1u << (trial % 4);
    const QuantFormat f = trial % 2 ? fit_format_centroids(t, QuantFormat::kmeans(n))
                                    : QuantFormat::uniform(n);
    const auto q = encode(t, f);
    save_quantized(q, dir / "lowbit_acc.qzt");
    const auto qb = load_quantized(dir / "lowbit_acc.qzt");
    if (!(qb == q) || serialize_quantized(qb) != serialize_quantized(q) ||
        decode(qb).data != decode(q).data) {
      o.fail("QZT1 round trip differs for " + to_string(f.kind) + " n=" + std::to_string(n));
    }
    files += 2;
  }
  std::filesystem::remove(dir / "lowbit_acc.qtn");
  std::filesystem::remove(dir / "lowbit_acc.qzt");
  o.note(std::to_string(lists) + " code lists bijective, " + std::to_string(files) +
         " file round trips bit-exact");
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome lut_kernel_oracle() {
  Outcome o;
  std::mt19937_64 rng(3);
  // One centroid table per width, fitted on a large sample, reused for all shapes.
  std::vector<QuantFormat> formats;
  {
    const Tensor sample({256, 256}, normal_floats(rng, 256 * 256));
    for (unsigned n : {1u, 2u, 4u, 8u}) {
      formats.push_back(QuantFormat::uniform(n));
      formats.push_back(fit_format_centroids(sample, QuantFormat::kmeans(n)));
    }
  }
  std::size_t problems = 0;
  double worst_rel = 0.0;
  for (const auto& f : formats) {
    const LookupTable lut(f);
    for (std::size_t h = 1; h <= 256; ++h) {
      const Tensor wt({h, h}, normal_floats(rng, h * h));
      const auto w = encode(wt, f);
      for (std::size_t m = 1; m <= 4; ++m) {
        const auto x = normal_floats(rng, m * h);
        const auto ref = matmul_reference(w, x, m);
        const auto fused = matmul_lut_fused(w, x, m, lut);
        if (fused != ref) {
          o.fail("fused != reference for " + to_string(f.kind) + " n=" + std::to_string(f.bits) +
                 " h=" + std::to_string(h) + " m=" + std::to_string(m));
          return o;
        }
        const auto def = matmul_lut_deferred(w, x, m, lut);
        double num2 = 0.0, den2 = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
          const double d = static_cast<double>(def[i]) - ref[i];
          num2 += d * d;
          den2 += static_cast<double>(ref[i]) * ref[i];
        }
        const double rel = den2 > 0 ? std::sqrt(num2 / den2) : std::sqrt(num2);
        worst_rel = std::max(worst_rel, rel);
        ++problems;
      }
    }
  }
  if (worst_rel > 1e-5) o.fail("deferred relative error " + num(worst_rel) + " > 1e-5");

  bool flops_ok = true;
  for (std::uint64_t m = 1; m <= 64; ++m) {
    for (std::uint64_t h = 64; h <= 8192; h += 64) {
      MatmulSpec fused{m, h, h, 64, MatmulVariant::LutFused, true};
      MatmulSpec deferred{m, h, h, 64, MatmulVariant::LutDeferred, true};
      flops_ok &= flop_count(fused) == 2 * m * h * h + h * h;
      flops_ok &= flop_count(deferred) == 2 * m * h * h + 2 * m * h * h / 64;
    }
  }
  if (!flops_ok) o.fail("flop_count disagrees with 2mh^2+h^2 / 2mh^2+2mh^2/B");
  o.note(std::to_string(problems) + " problems (8 formats, h=1..256, m=1..4): fused bit-exact; "
         "deferred max relative error " + num(worst_rel) + "; flop formulas exact");
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome kmeans_dominance() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::size_t violations = 0, monotone_breaks = 0, fits = 0;
  for (int blk = 0; blk < 1000; ++blk) {
    const auto w = normal_floats(rng, 64);
    const auto f = QuantFormat::kmeans(1);
    const float scale = round_to_bf16(block_scale_statistic(w, f));
    std::vector<float> s(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) s[i] = w[i] / scale;
    for (std::size_t k : {2u, 4u, 8u, 16u}) {
      KMeansConfig cfg;
      cfg.k = k;
      cfg.init = KMeansInit::UniformGrid;
      const auto r = lloyd_fit(s, cfg);
      ++fits;
      for (std::size_t i = 1; i < r.mse_history.size(); ++i) {
        if (r.mse_history[i] > r.mse_history[i - 1]) ++monotone_breaks;
      }
      const auto grid = uniform_grid(k);
      const double mse_uniform = reconstruction_mse(s, std::span<const double>(grid));
      const double mse_kmeans = reconstruction_mse(s, std::span<const float>(r.centroids));
      if (mse_kmeans > mse_uniform) ++violations;
    }
  }
  if (violations) o.fail(std::to_string(violations) + " blocks where k-means MSE > uniform MSE");
  if (monotone_breaks) o.fail(std::to_string(monotone_breaks) + " Lloyd iterations increased MSE");
  o.note("1000 Gaussian blocks x k in {2,4,8,16} (" + std::to_string(fits) +
         " fits): 0 violations, Lloyd MSE non-increasing in every run");
  return o;
}

// 5 -------------------------------------------------------------------------
Outcome ste_gradient() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0, worst_component = 0.0, largest_off = 0.0;
  const std::vector<std::pair<FormatKind, unsigned>> kinds{
      {FormatKind::Uniform, 1}, {FormatKind::Uniform, 2}, {FormatKind::Uniform, 3},
      {FormatKind::Uniform, 4}, {FormatKind::KMeans, 1},  {FormatKind::KMeans, 2},
      {FormatKind::KMeans, 4},  {FormatKind::Uniform, 8}};
  for (int inst = 0; inst < 100; ++inst) {
    auto model = ToyModel::random({}, 1000 + inst);
    const auto [kind, bits] = kinds[inst % kinds.size()];
    for (auto* layer : {&model.layer1, &model.layer2}) {
      layer->format = kind == FormatKind::Uniform
                          ? QuantFormat::uniform(bits)
                          : fit_format_centroids(layer->master_tensor(), QuantFormat::kmeans(bits));
      layer->active = true;
    }
    const std::size_t batch = 8;
    const auto cfg = model.config();
    std::vector<double> x(batch * cfg.input), t(batch * cfg.output);
    for (auto& v : x) v = nd(rng);
    for (auto& v : t) v = nd(rng);
    const auto g = loss_and_gradients(model, x, t, batch);

    ToyModel surrogate = model;
    surrogate.layer1.master = model.layer1.forward_weights();
    surrogate.layer2.master = model.layer2.forward_weights();
    surrogate.set_active(false);
    const double h = 1e-3;
    double diff2 = 0.0, ref2 = 0.0;
    auto check = [&](std::vector<double>& p, const std::vector<double>& analytic) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = mse_loss(surrogate, x, t, batch);
        p[i] = keep - h;
        const double down = mse_loss(surrogate, x, t, batch);
        p[i] = keep;
        const double fd = (up - down) / (2 * h);
        diff2 += (fd - analytic[i]) * (fd - analytic[i]);
        ref2 += fd * fd;
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        const double err = std::abs(fd - analytic[i]) / denom;
        worst_component = std::max(worst_component, err);
        if (err > 1e-3) largest_off = std::max(largest_off, std::abs(analytic[i]));
      }
    };
    check(surrogate.layer1.master, g.w1);
    check(surrogate.layer1.bias, g.b1);
    check(surrogate.layer2.master, g.w2);
    check(surrogate.layer2.bias, g.b2);
    worst = std::max(worst, std::sqrt(diff2 / ref2));
  }
  if (worst > 1e-3) o.fail("max relative error " + num(worst) + " > 1e-3");
  o.note("100 toy models (uniform n=1,2,3,4,8; kmeans n=1,2,4), h=1e-3: max relative error of "
         "the gradient vector " + num(worst) + " (largest single-component error " +
         num(worst_component) + "; components off by more than 1e-3 all have |g| <= " +
         num(largest_off) + ")");
  return o;
}

// 6 -------------------------------------------------------------------------
Outcome qat_stability() {
  Outcome o;
  const auto model = ToyModel::random({}, 42);
  const TrainConfig cfg;  // 2000 steps, seed 42
  const QatSchedule schedule;
  try {
    const auto one = train_toy(model, schedule, QuantFormat::kmeans(1), cfg);
    bool finite = one.losses.size() == 2000 && std::isfinite(one.final_eval_loss);
    for (double l : one.losses) finite &= std::isfinite(l);
    if (!finite) o.fail("1-bit k-means run did not complete 2000 finite steps");
    const auto fp = train_toy(model, schedule, std::nullopt, cfg);
    const auto four = train_toy(model, schedule, QuantFormat::kmeans(4), cfg);
    const double ratio = four.final_eval_loss / fp.final_eval_loss;
    if (!(ratio <= 2.0)) o.fail("4-bit k-means loss is " + num(ratio) + "x full precision");
    o.note("1-bit k-means: 2000 finite steps, final loss " + num(one.final_eval_loss) +
           "; 4-bit k-means " + num(four.final_eval_loss) + " vs full precision " +
           num(fp.final_eval_loss) + " (" + num(ratio, "%.3f") + "x)");
  } catch (const std::exception& e) {
    o.fail(std::string("training failed: ") + e.what());
  }
  return o;
}

// 7 -------------------------------------------------------------------------
Outcome scaling_fit_recovery() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<double> ns{0.8, 1.4, 3.9};
  const std::vector<double> ds{8.4, 16.8, 25.2, 33.6, 41.9, 50.3};
  const std::vector<double> ps{1.25, 2.25, 3.25, 4.25, 6.25, 8.25};
  double worst_alpha = 0, worst_beta = 0, worst_gamma = 0, worst_r2 = 1, worst_grad = 0;
  std::string per_draw;
  int below_truth = 0;
  for (int draw = 0; draw < 10; ++draw) {
    ScalingParams truth;
    truth.alpha = 0.3 + 0.4 * u(rng);
    truth.beta = 0.3 + 0.4 * u(rng);
    truth.gamma_w = 2.5 + 2.0 * u(rng);
    truth.A = 2.0 + 4.0 * u(rng);
    truth.B = 4.0 + 8.0 * u(rng);
    truth.E = 0.5 + 0.5 * u(rng);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<ScalingObservation> obs;
    for (double n : ns)
      for (double d : ds)
        for (double p : ps) obs.push_back({n, d, p, predict_loss(truth, n, d, p) * std::exp(noise(rng))});

    worst_grad = std::max(worst_grad, gradient_check(to_raw(truth), obs, 1e-3));
    RawParams probe = to_raw(truth);
    for (auto& v : probe) v += 0.3 * (u(rng) - 0.5);
    worst_grad = std::max(worst_grad, gradient_check(probe, obs, 1e-3));

    const auto rep = fit(obs);
    if (rep.objective <= huber_objective(to_raw(truth), obs, 1e-3) + 1e-12) ++below_truth;
    const double ea = std::abs(rep.params.alpha / truth.alpha - 1);
    const double eb = std::abs(rep.params.beta / truth.beta - 1);
    const double eg = std::abs(rep.params.gamma_w / truth.gamma_w - 1);
    worst_alpha = std::max(worst_alpha, ea);
    worst_beta = std::max(worst_beta, eb);
    worst_gamma = std::max(worst_gamma, eg);
    worst_r2 = std::min(worst_r2, rep.r2);
    per_draw += (per_draw.empty() ? "" : " ") + num(100 * ea, "%.1f") + "/" +
                num(100 * eb, "%.1f") + "/" + num(100 * eg, "%.1f");
    std::fprintf(stderr,
                 "  draw %d: true a=%.3f b=%.3f g=%.3f  fit a=%.3f b=%.3f g=%.3f  R2=%.5f\n", draw,
                 truth.alpha, truth.beta, truth.gamma_w, rep.params.alpha, rep.params.beta,
                 rep.params.gamma_w, rep.r2);
  }
  if (worst_alpha > 0.05) o.fail("alpha error up to " + num(100 * worst_alpha, "%.1f") + "%");
  if (worst_beta > 0.05) o.fail("beta error up to " + num(100 * worst_beta, "%.1f") + "%");
  if (worst_gamma > 0.05) o.fail("gamma_w error up to " + num(100 * worst_gamma, "%.1f") + "%");
  if (!(worst_r2 > 0.99)) o.fail("R^2 down to " + num(worst_r2));
  if (!(worst_grad < 1e-4)) o.fail("gradient check error " + num(worst_grad));
  const std::string summary = "10 draws on 3x6x6 grids, sigma=0.01: worst |rel err| alpha " +
                              num(100 * worst_alpha, "%.1f") + "%, beta " +
                              num(100 * worst_beta, "%.1f") + "%, gamma_w " +
                              num(100 * worst_gamma, "%.1f") + "%; min R^2 " +
                              num(worst_r2, "%.5f") + "; gradient check " + num(worst_grad) +
                              "; fitted objective <= objective at truth in " +
                              std::to_string(below_truth) + "/10 draws" +
                              " [per draw a/b/g %: " + per_draw + "]";
  if (o.pass) {
    o.note(summary);
  } else {
    o.detail += " (" + summary + ")";
  }
  return o;
}

// 8 -------------------------------------------------------------------------
Outcome budget_reproduction() {
  Outcome o;
  std::ifstream f(std::string(LOWBIT_TEST_DATA) + "/budget_density_reference.csv");
  if (!f) {
    o.fail("reference data missing");
    return o;
  }
  std::string line;
  std::getline(f, line);
  double worst = 0.0;
  std::size_t points = 0;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string kind, gamma, m, p, density;
    std::getline(ss, kind, ',');
    std::getline(ss, gamma, ',');
    std::getline(ss, m, ',');
    std::getline(ss, p, ',');
    std::getline(ss, density, ',');
    const auto s = solve_n(std::stod(p), std::stod(m), std::stod(gamma));
    worst = std::max(worst, std::abs(s.density - std::stod(density)));
    if (s.residual() > 1e-9) o.fail("budget residual " + num(s.residual()));
    ++points;
  }
  if (points != 128) o.fail("expected 128 reference points, read " + std::to_string(points));
  if (worst > 1e-3) o.fail("max density deviation " + num(worst));
  std::vector<double> bits;
  for (int p = 1; p <= 16; ++p) bits.push_back(p);
  const double u8 = optimal_bits(8, 3.71, bits).bits;
  const double k8 = optimal_bits(8, 3.32, bits).bits;
  if (u8 != 2) o.fail("uniform 8 GB optimum is " + num(u8) + " bits");
  if (k8 != 1) o.fail("kmeans 8 GB optimum is " + num(k8) + " bits");
  o.note(std::to_string(points) + " reference points, max |density deviation| " + num(worst) +
         "; optimal bits at 8 GB: uniform " + num(u8) + ", kmeans " + num(k8));
  return o;
}

// 9 -------------------------------------------------------------------------
Outcome roofline() {
  Outcome o;
  const DeviceProfile l40s;
  const double s4 = speedup(16, 4.25, 1, l40s);
  const double s1 = speedup(16, 1.25, 1, l40s);
  const double lo4 = regimes(16, 4.25, l40s).first;
  const double lo1 = regimes(16, 1.25, l40s).first;
  if (std::abs(s4 - 3.76) > 0.01) o.fail("speedup 16->4.25 = " + num(s4));
  if (std::abs(lo4 - 111) > 1) o.fail("m_low 16->4.25 = " + num(lo4));
  if (std::abs(s1 - 12.8) > 0.05) o.fail("speedup 16->1.25 = " + num(s1));
  if (std::abs(lo1 - 32.7) > 0.5) o.fail("m_low 16->1.25 = " + num(lo1));
  for (double m = 419.0 + 1e-9; m < 5000; m = m < 420 ? 420 : m + 1) {
    if (speedup(16, 4.25, m, l40s) != 1.0 || speedup(16, 1.25, m, l40s) != 1.0) {
      o.fail("speedup != 1 at m=" + num(m));
      break;
    }
  }
  o.note("16->4.25: " + num(s4, "%.4f") + "x, m_low " + num(lo4, "%.2f") + "; 16->1.25: " +
         num(s1, "%.4f") + "x, m_low " + num(lo1, "%.2f") + "; speedup 1 for all m > 419");
  return o;
}

// 10 ------------------------------------------------------------------------
Outcome g_curve() {
  Outcome o;
  std::size_t samples = 0;
  for (double gamma : {3.32, 3.71}) {
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 1500; ++i) {
      const double p = 1.0 + i * 0.01;
      const double g = g_density(p, gamma);
      if (!(g < prev)) {
        o.fail("g not strictly decreasing at P=" + num(p) + " gamma=" + num(gamma));
        break;
      }
      prev = g;
    }
  }
  for (int i = 0; i <= 1500; ++i) {
    const double p = 1.0 + i * 0.01;
    ++samples;
    if (!(g_density(p, 3.32) > g_density(p, 3.71))) {
      o.fail("g(P;3.32) <= g(P;3.71) at P=" + num(p));
      break;
    }
  }
  o.note("g strictly decreasing on [1,16] for both gamma; g(P;3.32) > g(P;3.71) at all " +
         std::to_string(samples) + " sampled P");
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "bit-width table", 1, bit_width_table},
      {2, "codec round trips", 30, codec_round_trips},
      {3, "LUT kernel oracle", 120, lut_kernel_oracle},
      {4, "k-means dominance", 60, kmeans_dominance},
      {5, "STE gradient contract", 60, ste_gradient},
      {6, "QAT stability", 120, qat_stability},
      {7, "scaling-fit recovery", 300, scaling_fit_recovery},
      {8, "budget figure reproduction", 10, budget_reproduction},
      {9, "roofline model", 1, roofline},
      {10, "g-curve properties", 1, g_curve},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }
  int failures = 0, ran = 0;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) o.fail("took " + num(secs, "%.2f") + " s, limit " + num(c.limit_s) + " s");
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  if (ran == 0) {
    std::fprintf(stderr, "no such criterion\n");
    return 2;
  }
  return failures ? 1 : 0;
}
