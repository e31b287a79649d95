#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "lowbit/packing.hpp"
#include "lowbit/tensor.hpp"

using namespace lowbit;

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const auto log = fs::temp_directory_path() / "lowbit_cli_stdout.txt";
  const std::string cmd = std::string(LOWBIT_CLI) + " " + args + " > " + log.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("lowbit_cli_" + name); }

}  // namespace

TEST(Cli, BitwidthTable) {
  const auto r = run("bitwidth --kind uniform --n 2..8");
  ASSERT_EQ(r.code, 0);
  for (const char* v : {"2,1.83,", "3,3.06,", "4,4.16,", "6,6.23,", "7,7.24,", "8,8.24,"}) {
    EXPECT_NE(r.out.find(v), std::string::npos) << v;
  }
  const auto k = run("bitwidth --kind kmeans --n 1,4");
  EXPECT_NE(k.out.find("1,1.25,1.25\n"), std::string::npos);
  EXPECT_NE(k.out.find("4,4.25,4.25\n"), std::string::npos);
}

TEST(Cli, QuantizeDequantizeRoundTrip) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd(0.0f, 0.1f);
  Tensor t({16, 96}, std::vector<float>(16 * 96));
  for (auto& v : t.data) v = nd(rng);
  save_tensor(t, tmp("w.qtn"));
  for (const std::string kind : {"uniform", "kmeans"}) {
    const auto q = run("quantize " + tmp("w.qtn").string() + " --kind " + kind + " --n 4 --out " +
                       tmp("w.qzt").string());
    ASSERT_EQ(q.code, 0) << kind;
    EXPECT_NE(q.out.find("P_w,"), std::string::npos);
    ASSERT_EQ(run("dequantize " + tmp("w.qzt").string() + " --out " + tmp("back.qtn").string()).code, 0);
    EXPECT_EQ(load_tensor(tmp("back.qtn")), decode(load_quantized(tmp("w.qzt"))));
  }
  const auto first = slurp(tmp("w.qzt"));
  ASSERT_EQ(run("quantize " + tmp("w.qtn").string() + " --kind kmeans --n 4 --out " +
                tmp("w.qzt").string()).code, 0);
  EXPECT_EQ(slurp(tmp("w.qzt")), first);
}

TEST(Cli, BudgetCurve) {
  const auto r = run("budget --M 2,8,16,60 --gamma 3.71 --bits 1..16 --out " + tmp("b.csv").string());
  ASSERT_EQ(r.code, 0);
  const auto csv = slurp(tmp("b.csv"));
  EXPECT_EQ(csv.rfind("P_w,M_GB,N_billions,E_billions,density\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 65);
  EXPECT_NE(csv.find("1,2,"), std::string::npos);
  EXPECT_NE(r.out.find("\n8,2,"), std::string::npos);  // optimal bits at 8 GB
}

TEST(Cli, PerfCurve) {
  const auto r = run("perf --m 1,1024");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("1,3.76470588"), std::string::npos);
  EXPECT_NE(r.out.find("\n1024,1,1\n"), std::string::npos);
  const auto slow = run("perf --m 1 --device-compute 1e12 --device-bandwidth 1e12");
  EXPECT_NE(slow.out.find("\n1,1,1\n"), std::string::npos);
}

TEST(Cli, FitAndIsoloss) {
  std::ofstream f(tmp("runs.csv"));
  f << "format,n_params,tokens,bits_per_weight,loss\n";
  for (const char* kind : {"uniform", "kmeans"}) {
    const double gamma = std::string(kind) == "uniform" ? 3.71 : 3.32;
    for (double n : {0.8, 1.4, 3.9})
      for (double d : {10.0, 40.0, 160.0})
        for (double p : {1.25, 2.25, 4.25}) {
          const double loss = 50 * std::pow(n * (1 - std::exp(-p / gamma)), -0.5) +
                              400 * std::pow(d, -0.45) + 1.2;
          f << kind << "," << static_cast<long long>(n * 1e9) << ","
            << static_cast<long long>(d * 1e9) << "," << p << "," << loss << "\n";
        }
  }
  f.close();
  const auto r = run("fit " + tmp("runs.csv").string() + " --out " + tmp("fit.json").string());
  ASSERT_EQ(r.code, 0);
  const auto json = slurp(tmp("fit.json"));
  EXPECT_NE(json.find("\"uniform\""), std::string::npos);
  EXPECT_NE(json.find("\"gamma_w\""), std::string::npos);
  const auto iso = run("isoloss " + tmp("fit.json").string() + " --x 0.8..3.9:4 --bits 1.25,4.25");
  ASSERT_EQ(iso.code, 0);
  EXPECT_EQ(std::count(iso.out.begin(), iso.out.end(), '\n'), 9);
}

TEST(Cli, QatDemoIsReproducible) {
  const std::string args = "qat-demo --kind kmeans --n 2 --steps 150 --warmup 50 --seed 7 --out ";
  ASSERT_EQ(run(args + tmp("t1.csv").string()).code, 0);
  ASSERT_EQ(run(args + tmp("t2.csv").string()).code, 0);
  EXPECT_EQ(slurp(tmp("t1.csv")), slurp(tmp("t2.csv")));
  EXPECT_EQ(slurp(tmp("t1.csv")).rfind("step,phase,loss\n", 0), 0u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("nosuch").code, 2);
  EXPECT_EQ(run("bitwidth --kind float").code, 2);
  EXPECT_EQ(run("bitwidth --n x").code, 2);
  EXPECT_EQ(run("dequantize /nonexistent.qzt --out /tmp/x.qtn").code, 3);
  EXPECT_EQ(run("budget --M 0.000001 --bits 1").code, 4);
  EXPECT_EQ(run("bitwidth --help").code, 0);
  for (const char* sub : {"quantize", "dequantize", "fit", "isoloss", "budget", "perf", "bench",
                          "qat-demo", "bitwidth"}) {
    const auto h = run(std::string(sub) + " --help");
    EXPECT_EQ(h.code, 0) << sub;
    EXPECT_NE(h.out.find("--"), std::string::npos) << sub;
  }
}
