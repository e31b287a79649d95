#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "lowbit/budget.hpp"
#include "lowbit/errors.hpp"

using namespace lowbit;

namespace {

struct ReferencePoint {
  std::string format;
  double gamma, m_gb, bits, density;
};

std::vector<ReferencePoint> load_reference() {
  std::ifstream f(std::string(LOWBIT_TEST_DATA) + "/budget_density_reference.csv");
  std::vector<ReferencePoint> pts;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    ReferencePoint p;
    std::string cell;
    std::getline(ss, p.format, ',');
    std::getline(ss, cell, ',');
    p.gamma = std::stod(cell);
    std::getline(ss, cell, ',');
    p.m_gb = std::stod(cell);
    std::getline(ss, cell, ',');
    p.bits = std::stod(cell);
    std::getline(ss, cell, ',');
    p.density = std::stod(cell);
    pts.push_back(p);
  }
  return pts;
}

std::vector<double> one_to_sixteen() {
  std::vector<double> v;
  for (int p = 1; p <= 16; ++p) v.push_back(p);
  return v;
}

}  // namespace

TEST(GDensity, Values) {
  EXPECT_NEAR(g_density(1.25, 3.32), 0.2510, 1e-4);
  for (double gamma : {3.32, 3.71}) {
    for (double p = 1.0; p < 16.0; p += 0.05) ASSERT_GT(g_density(p, gamma), g_density(p + 0.05, gamma));
  }
  for (double p = 0.1; p <= 32; p += 0.1) ASSERT_GT(g_density(p, 3.32), g_density(p, 3.71));
  EXPECT_THROW(g_density(0, 3), DomainError);
}

TEST(Embedding, AnchorPoints) {
  EXPECT_NEAR(embedding_params(3.883551744), 2 * 128256 * 3072 * 1e-9, 1e-12);
  EXPECT_NEAR(embedding_params(3.883551744), 0.7880, 1e-4);
  // alpha_d = 0.320 puts d(30.643B) at ~5950, a few percent under 6144.
  const double d = embedding_params(30.643) / (2 * 128256 * 1e-9);
  EXPECT_NEAR(d / 6144, 1.0, 0.04);
  EXPECT_LT(embedding_params(1), embedding_params(2));
  ArchLaw tied;
  tied.untied = false;
  EXPECT_NEAR(embedding_params(5, tied) * 2, embedding_params(5), 1e-15);
  EXPECT_THROW(embedding_params(0), DomainError);
  ArchLaw bad;
  bad.alpha_d = 1.5;
  EXPECT_THROW(embedding_params(1, bad), DomainError);
}

TEST(SolveN, ReproducesReferenceCurves) {
  const auto pts = load_reference();
  ASSERT_EQ(pts.size(), 128u);
  double worst = 0.0;
  for (const auto& p : pts) {
    const auto s = solve_n(p.bits, p.m_gb, p.gamma);
    worst = std::max(worst, std::abs(s.density - p.density));
    EXPECT_LE(s.residual(), 1e-9);
    EXPECT_GT(s.n_billions, s.e_billions);
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(SolveN, SixteenBitIndependentOfBudget) {
  for (double m : {2.0, 8.0, 60.0, 1000.0}) {
    const auto s = solve_n(16, m, 3.71);
    EXPECT_NEAR(s.n_billions, 8 * m / 16, 1e-9 * m);
    EXPECT_NEAR(s.density, f_capacity(16, 3.71) / 16, 1e-10);
  }
  ArchLaw other;
  other.vocab = 32000;
  EXPECT_NEAR(solve_n(16, 8, 3.71, other).density, 0.061662640597400876, 1e-10);
}

TEST(SolveN, KnownPointsAndMonotone) {
  EXPECT_NEAR(solve_n(1, 2, 3.71).n_billions, 4.03, 0.01);
  EXPECT_NEAR(solve_n(2, 8, 3.71).density, 0.1454854786054133, 1e-9);
  double prev = 0;
  for (double m = 1; m < 100; m *= 1.5) {
    const double n = solve_n(3, m, 3.71).n_billions;
    EXPECT_GT(n, prev);
    prev = n;
  }
}

TEST(SolveN, Errors) {
  EXPECT_THROW(solve_n(0.5, 8, 3.71), DomainError);
  EXPECT_THROW(solve_n(17, 8, 3.71), DomainError);
  EXPECT_THROW(solve_n(4, 0, 3.71), DomainError);
  EXPECT_THROW(solve_n(1, 1e-6, 3.71), Infeasible);
}

TEST(OptimalBits, ReferenceCaptions) {
  const auto bits = one_to_sixteen();
  EXPECT_EQ(optimal_bits(8, 3.71, bits).bits, 2);
  EXPECT_EQ(optimal_bits(8, 3.32, bits).bits, 1);
  EXPECT_EQ(optimal_bits(60, 3.71, bits).bits, 1);
  EXPECT_EQ(optimal_bits(60, 3.32, bits).bits, 1);
  EXPECT_THROW(optimal_bits(8, 3.71, std::vector<double>{}), DomainError);
  // Identical candidates: the first (lowest) wins.
  EXPECT_EQ(optimal_bits(8, 3.71, std::vector<double>{16, 16}).bits, 16);
}

TEST(BudgetCsv, Format) {
  EXPECT_EQ(budget_csv_header(), "P_w,M_GB,N_billions,E_billions,density");
  const auto row = budget_csv_row(solve_n(16, 2, 3.71));
  EXPECT_EQ(row.substr(0, 5), "16,2,");
}

TEST(Isoloss, ShapeAndSigns) {
  const ScalingParams u{50, 400, 1.2, 0.5, 0.45, 3.71};
  ScalingParams k = u;
  k.gamma_w = 3.32;
  IsolossSpec spec;
  spec.fixed = 50.3;
  spec.x_values = linspace(0.8, 3.9, 7);
  spec.bits = linspace(1.25, 8.25, 5);
  const auto cells = isoloss_grid(u, k, spec);
  ASSERT_EQ(cells.size(), 35u);
  EXPECT_EQ(cells[7].bits, spec.bits[1]);
  EXPECT_EQ(cells[7].x, 0.8);
  for (const auto& c : cells) EXPECT_GT(c.gap, 0.0);
  for (const auto& c : isoloss_grid(u, u, spec)) EXPECT_EQ(c.gap, 0.0);

  spec.axis = IsolossAxis::D;
  spec.fixed = 3.9;
  spec.x_values = linspace(10, 100, 3);
  const auto d_cells = isoloss_grid(u, k, spec);
  EXPECT_DOUBLE_EQ(d_cells[0].loss_uniform, predict_loss(u, 3.9, 10, 1.25));
  const auto csv = isoloss_csv(d_cells);
  EXPECT_EQ(csv.rfind("P_w,x_axis_value,loss_uniform,loss_kmeans,gap\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 16);
}

TEST(Linspace, Endpoints) {
  const auto v = linspace(1, 2, 3);
  EXPECT_EQ(v, (std::vector<double>{1, 1.5, 2}));
  EXPECT_EQ(linspace(4, 9, 1), (std::vector<double>{4}));
  EXPECT_TRUE(linspace(0, 1, 0).empty());
}
