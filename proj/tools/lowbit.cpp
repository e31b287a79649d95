// lowbit: command-line front end for the quantization library.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lowbit/bench.hpp"
#include "lowbit/budget.hpp"
#include "lowbit/errors.hpp"
#include "lowbit/formats.hpp"
#include "lowbit/kmeans.hpp"
#include "lowbit/packing.hpp"
#include "lowbit/perfmodel.hpp"
#include "lowbit/qat.hpp"
#include "lowbit/scaling.hpp"
#include "lowbit/tensor.hpp"

namespace {

using namespace lowbit;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double parse_number(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || !std::isfinite(v)) {
    throw ConfigError("not a number: '" + s + "'");
  }
  return v;
}

// "2,8,16,60", "2..8" (unit step) or "0.8..3.9:32" (32 evenly spaced points).
std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_number(item));
      continue;
    }
    const double lo = parse_number(item.substr(0, dots));
    std::string rest = item.substr(dots + 2);
    const auto colon = rest.find(':');
    if (colon != std::string::npos) {
      const double count = parse_number(rest.substr(colon + 1));
      const double hi = parse_number(rest.substr(0, colon));
      if (count < 1 || count != std::floor(count)) throw ConfigError("bad point count in " + item);
      for (double v : linspace(lo, hi, static_cast<std::size_t>(count))) out.push_back(v);
      continue;
    }
    const double hi = parse_number(rest);
    if (hi < lo) throw ConfigError("empty range " + item);
    for (double v = lo; v <= hi + 1e-9; v += 1.0) out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty value list");
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_values(text)) {
    if (v < 0 || v != std::floor(v)) throw ConfigError("expected non-negative integers: " + text);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct FormatArgs {
  std::string kind = "kmeans";
  std::string n = "4";
  std::uint32_t block = 64;
  std::string scale_rule;
  bool mean_shift = false;
};

void add_format_flags(CLI::App* app, FormatArgs& f, bool with_n_list = false) {
  app->add_option("--kind", f.kind, "Format family: uniform or kmeans")->capture_default_str();
  app->add_option("--n", f.n,
                  with_n_list ? "Code widths, e.g. 4, 1,2,4 or 2..8" : "Code width in bits")
      ->capture_default_str();
  app->add_option("--block", f.block, "Weights per scale block")->capture_default_str();
  app->add_option("--scale-rule", f.scale_rule,
                  "absmax or absmean (default: absmean for n <= 2, absmax above)");
}

FormatKind kind_flag(const std::string& text) {
  try {
    return parse_format_kind(text);
  } catch (const DataError& e) {
    throw ConfigError(std::string("--kind: ") + e.what());
  }
}

QuantFormat make_format(const FormatArgs& a, unsigned bits) {
  const auto kind = kind_flag(a.kind);
  auto f = kind == FormatKind::Uniform ? QuantFormat::uniform(bits, a.block)
                                       : QuantFormat::kmeans(bits, {}, a.block);
  if (!a.scale_rule.empty()) f.scale_rule = parse_scale_rule(a.scale_rule);
  f.mean_shift = a.mean_shift;
  f.validate();
  return f;
}

unsigned single_bits(const std::string& text) {
  const auto v = parse_counts(text);
  if (v.size() != 1 || v[0] == 0 || v[0] > 8) throw ConfigError("--n must be one width in 1..8");
  return static_cast<unsigned>(v[0]);
}

ScalingParams params_from_json(const nlohmann::json& j) {
  ScalingParams p;
  p.A = j.at("A").get<double>();
  p.B = j.at("B").get<double>();
  p.E = j.at("E").get<double>();
  p.alpha = j.at("alpha").get<double>();
  p.beta = j.at("beta").get<double>();
  p.gamma_w = j.at("gamma_w").get<double>();
  p.validate();
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-scaled low-bit weight formats: codecs, kernels, QAT and analysis tools"};
  app.require_subcommand(1);
  std::string out;
  std::uint64_t seed = 42;

  // quantize
  FormatArgs qf;
  std::string q_in;
  auto* quantize = app.add_subcommand(
      "quantize",
      "Quantize a QTN1 float tensor into a QZT1 container. k-means centroids are fitted on the\n"
      "block-normalized weights. Prints the bit-width and the reconstruction MSE.");
  quantize->add_option("input", q_in, "QTN1 input tensor")->required();
  add_format_flags(quantize, qf);
  quantize->add_flag("--mean-shift", qf.mean_shift, "Subtract the tensor mean (uniform 1-bit only)");
  quantize->add_option("--out", out, "QZT1 output path")->required();
  quantize->add_option("--seed", seed, "Unused; accepted for uniformity")->capture_default_str();

  // dequantize
  std::string d_in;
  auto* dequantize =
      app.add_subcommand("dequantize", "Decode a QZT1 container back to a QTN1 float tensor.");
  dequantize->add_option("input", d_in, "QZT1 input")->required();
  dequantize->add_option("--out", out, "QTN1 output path")->required();

  // fit
  std::string f_in, f_kind;
  double delta = 1e-3;
  auto* fit_cmd = app.add_subcommand(
      "fit",
      "Fit L = A (N f(P))^-alpha + B D^-beta + E, f(P) = 1 - exp(-P/gamma_w), to a runs CSV\n"
      "(header format,n_params,tokens,bits_per_weight,loss). Each format family is fitted\n"
      "separately with a multistart L-BFGS minimisation of the Huber loss of log residuals.\n"
      "N and D are converted to billions, so A and B are in those units.");
  fit_cmd->add_option("input", f_in, "Runs CSV")->required();
  fit_cmd->add_option("--kind", f_kind, "Fit only this format family");
  fit_cmd->add_option("--delta", delta, "Huber threshold")->capture_default_str();
  fit_cmd->add_option("--out", out, "JSON output (default stdout)");

  // isoloss
  std::string i_params, i_axis = "N", i_x = "0.8..3.9:32", i_bits = "1.25..8.25:29";
  double i_fixed = 50.3;
  auto* isoloss = app.add_subcommand(
      "isoloss",
      "Predicted loss of uniform and k-means parameter sets over a (P_w x N) grid at fixed D\n"
      "or a (P_w x D) grid at fixed N. gap = loss_uniform - loss_kmeans.");
  isoloss->add_option("params", i_params, "JSON with 'uniform' and 'kmeans' parameter objects")
      ->required();
  isoloss->add_option("--axis", i_axis, "N or D")->capture_default_str();
  isoloss->add_option("--fixed", i_fixed, "Value of the other axis, billions")->capture_default_str();
  isoloss->add_option("--x", i_x, "Axis values, billions")->capture_default_str();
  isoloss->add_option("--bits", i_bits, "Bit-widths")->capture_default_str();
  isoloss->add_option("--out", out, "CSV output (default stdout)");

  // budget
  std::string b_m = "2,8,16,60", b_bits = "1..16";
  double b_gamma = 3.71;
  auto* budget = app.add_subcommand(
      "budget",
      "For weight-memory budgets M (GB), solve P*N + (16-P)*E(N) = 8M gigabits for N, where\n"
      "E(N) counts 16-bit embedding and head parameters, and report N_eff/M. Writes the\n"
      "curve CSV, then the density-maximizing bit-width for each M.");
  budget->add_option("--M", b_m, "Budgets in GB")->capture_default_str();
  budget->add_option("--gamma", b_gamma, "gamma_w of f(P)")->capture_default_str();
  budget->add_option("--bits", b_bits, "Candidate bit-widths P_w in [1, 16]")->capture_default_str();
  budget->add_option("--out", out, "Curve CSV (default stdout)");

  // perf
  std::string p_bits = "4.25,1.25", p_m = "1..1024";
  DeviceProfile dev;
  auto* perf = app.add_subcommand(
      "perf",
      "Roofline speedup of P_w-bit over 16-bit weights at batch size m,\n"
      "max(1, 16 nu/16m) / max(1, P nu/16m) with nu = compute rate / bandwidth.\n"
      "Default device: L40S. Prints the regime boundaries when --out is given.");
  perf->add_option("--bits", p_bits, "Two bit-widths: the 4-bit and 1-bit columns")
      ->capture_default_str();
  perf->add_option("--m", p_m, "Batch sizes")->capture_default_str();
  perf->add_option("--device-compute", dev.r_compute, "Peak op/s")->capture_default_str();
  perf->add_option("--device-bandwidth", dev.r_transfer, "Memory bandwidth, B/s")
      ->capture_default_str();
  perf->add_option("--out", out, "CSV output (default stdout)");

  // bench
  std::string bn_bits = "1,2,4,8", bn_m = "1", bn_h = "1024", bn_variant = "all";
  BenchConfig bcfg;
  auto* bench = app.add_subcommand(
      "bench", "Time the reference, LUT-fused and LUT-deferred matmuls on CPU (h x h weights).");
  bench->add_option("--bits", bn_bits, "Code widths")->capture_default_str();
  bench->add_option("--m", bn_m, "Batch sizes")->capture_default_str();
  bench->add_option("--hidden", bn_h, "Hidden sizes")->capture_default_str();
  bench->add_option("--variant", bn_variant, "reference, lut_fused, lut_deferred or all")
      ->capture_default_str();
  bench->add_option("--reps", bcfg.repetitions, "Repetitions")->capture_default_str();
  bench->add_option("--seed", seed, "Data seed")->capture_default_str();
  bench->add_option("--out", out, "CSV output (default stdout)");

  // qat-demo
  FormatArgs tf;
  QatSchedule sched;
  TrainConfig tcfg;
  bool full_precision = false, ablate = false;
  auto* qat = app.add_subcommand(
      "qat-demo",
      "Train a 2-layer toy regression model with fake-quantized weights and straight-through\n"
      "gradients after a full-precision warmup. Writes the loss trajectory CSV and prints the\n"
      "final held-out loss.");
  add_format_flags(qat, tf);
  qat->add_flag("--full-precision", full_precision, "Train without quantization");
  qat->add_flag("--ablate", ablate, "Run absmax and absmean side by side");
  qat->add_option("--steps", tcfg.steps, "SGD steps")->capture_default_str();
  qat->add_option("--warmup", sched.warmup_steps, "Full-precision steps")->capture_default_str();
  qat->add_option("--lr", tcfg.lr, "Learning rate")->capture_default_str();
  qat->add_option("--seed", seed, "Seed")->capture_default_str();
  qat->add_option("--out", out, "Trajectory CSV (default stdout)");

  // bitwidth
  FormatArgs wf;
  wf.n = "1..8";
  auto* bitwidth = app.add_subcommand(
      "bitwidth",
      "Average stored bits per weight including the 16-bit block scale. Uniform grids with\n"
      "n >= 2 use 2^n - 1 levels, so their code costs log2(2^n - 1) bits.");
  add_format_flags(bitwidth, wf, true);
  bitwidth->add_option("--out", out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*quantize) {
      const unsigned bits = single_bits(qf.n);
      auto format = make_format(qf, bits);
      const Tensor t = load_tensor(q_in);
      if (format.kind == FormatKind::KMeans) format = fit_format_centroids(t, format);
      const auto q = encode(t, format);
      save_quantized(q, out);
      const Tensor back = decode(q);
      double se = 0.0;
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double d = static_cast<double>(t.data[i]) - back.data[i];
        se += d * d;
      }
      std::cout << "P_w," << fmt(bit_width(format)) << "\n"
                << "mse," << fmt(se / static_cast<double>(t.numel())) << "\n"
                << "payload_bits," << payload_bits(q) << "\n";
    } else if (*dequantize) {
      save_tensor(decode(load_quantized(d_in)), out);
    } else if (*fit_cmd) {
      const auto runs = load_runs(f_in);
      FitConfig cfg;
      cfg.huber_delta = delta;
      nlohmann::ordered_json result;
      for (auto kind : {FormatKind::Uniform, FormatKind::KMeans}) {
        if (!f_kind.empty() && kind_flag(f_kind) != kind) continue;
        std::vector<RunRecord> subset;
        for (const auto& r : runs) {
          if (r.format == kind) subset.push_back(r);
        }
        if (subset.empty()) continue;
        const auto rep = fit(subset, cfg);
        for (const auto& w : rep.warnings) std::cerr << "warning (" << to_string(kind) << "): " << w << "\n";
        result[to_string(kind)] = nlohmann::ordered_json::parse(rep.to_json());
      }
      if (result.empty()) throw DataError("no runs for the requested format");
      emit(result.dump(2) + "\n", out);
    } else if (*isoloss) {
      const auto j = nlohmann::json::parse(read_text(i_params));
      IsolossSpec spec;
      if (i_axis == "N") {
        spec.axis = IsolossAxis::N;
      } else if (i_axis == "D") {
        spec.axis = IsolossAxis::D;
      } else {
        throw ConfigError("--axis must be N or D");
      }
      spec.fixed = i_fixed;
      spec.x_values = parse_values(i_x);
      spec.bits = parse_values(i_bits);
      const auto cells =
          isoloss_grid(params_from_json(j.at("uniform")), params_from_json(j.at("kmeans")), spec);
      emit(isoloss_csv(cells), out);
    } else if (*budget) {
      const auto ms = parse_values(b_m);
      const auto bits = parse_values(b_bits);
      std::string curve = budget_csv_header() + "\n";
      std::string table = "M_GB,optimal_P_w,density\n";
      for (double m : ms) {
        for (double p : bits) curve += budget_csv_row(solve_n(p, m, b_gamma)) + "\n";
        const auto best = optimal_bits(m, b_gamma, bits);
        table += fmt(m) + "," + fmt(best.bits) + "," + fmt(best.density) + "\n";
      }
      if (out.empty()) {
        std::cout << curve << "\n" << table;
      } else {
        emit(curve, out);
        std::cout << table;
      }
    } else if (*perf) {
      const auto bits = parse_values(p_bits);
      if (bits.size() != 2) throw ConfigError("--bits needs exactly two values");
      const auto ms = parse_values(p_m);
      emit(speedup_curve_csv(ms, bits[0], bits[1], dev), out);
      if (!out.empty()) {
        std::cout << "P_w1,P_w2,m_low,m_high\n";
        for (double p : bits) {
          const auto [lo, hi] = regimes(16.0, p, dev);
          std::cout << "16," << fmt(p) << "," << fmt(lo) << "," << fmt(hi) << "\n";
        }
      }
    } else if (*bench) {
      bcfg.seed = seed;
      std::vector<MatmulVariant> variants;
      if (bn_variant == "all") {
        variants = {MatmulVariant::Reference, MatmulVariant::LutFused, MatmulVariant::LutDeferred};
      } else {
        variants = {parse_matmul_variant(bn_variant)};
      }
      std::string csv = bench_csv_header() + "\n";
      for (auto h : parse_counts(bn_h))
        for (auto m : parse_counts(bn_m))
          for (auto b : parse_counts(bn_bits))
            for (auto v : variants) {
              csv += bench_csv_row(bench_matmul(v, static_cast<unsigned>(b), m, h, bcfg)) + "\n";
            }
      emit(csv, out);
    } else if (*qat) {
      tcfg.seed = seed;
      const auto model = ToyModel::random(ToyModelConfig{}, seed);
      std::optional<QuantFormat> format;
      if (!full_precision) format = make_format(tf, single_bits(tf.n));
      if (ablate) {
        if (!format) throw ConfigError("--ablate needs a quantized format");
        const auto r = ablate_scaling(model, sched, *format, tcfg);
        std::string csv = "rule,step,phase,loss\n";
        for (const auto* run : {&r.absmax, &r.absmean}) {
          const std::string rule = run == &r.absmax ? "absmax" : "absmean";
          std::istringstream lines(trajectory_csv(*run));
          std::string line;
          std::getline(lines, line);
          while (std::getline(lines, line)) csv += rule + "," + line + "\n";
        }
        emit(csv, out);
        std::cerr << "final_eval_loss absmax " << fmt(r.absmax.final_eval_loss) << " absmean "
                  << fmt(r.absmean.final_eval_loss) << "\n";
      } else {
        const auto r = train_toy(model, sched, format, tcfg);
        emit(trajectory_csv(r), out);
        std::cerr << "final_eval_loss " << fmt(r.final_eval_loss) << "\n";
      }
    } else if (*bitwidth) {
      std::string csv = "n,P_w,P_w_exact\n";
      for (auto n : parse_counts(wf.n)) {
        if (n == 0 || n > 8) throw ConfigError("--n widths must be in 1..8");
        const double p = bit_width(make_format(wf, static_cast<unsigned>(n)));
        csv += std::to_string(n) + "," + fmt(p, "%.2f") + "," + fmt(p) + "\n";
      }
      emit(csv, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FitFailed& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Infeasible& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad JSON: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
