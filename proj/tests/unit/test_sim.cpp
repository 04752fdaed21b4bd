#include <cmath>
#include <numeric>

#include "inertia/sim.hpp"
#include "test_util.hpp"

using namespace inertia;
using namespace inertia::sim;

namespace {

DriftSpec spec(double delta, double sigma, std::uint64_t seed = 1) {
  DriftSpec s;
  s.delta_max = delta;
  s.noise_sigma = sigma;
  s.seed = seed;
  return s;
}

std::vector<double> geometric(double lo, double ratio, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(ratio, i));
  return g;
}

// Argmin of the exact persistent-drift MSE over a grid.
double grid_argmin(double delta, double sigma, const std::vector<double>& grid) {
  double best = grid[0], best_mse = INFINITY;
  for (double tau : grid) {
    const double m = persistent_mse(delta, sigma, tau, 2000);
    if (m < best_mse) {
      best_mse = m;
      best = tau;
    }
  }
  return best;
}

}  // namespace

TEST(Sim, NoDriftNoNoiseIsExact) {
  for (double tau : {0.5, 4.0, 100.0}) EXPECT_LT(simulate_drift(spec(0.0, 0.0), tau, 16), 1e-12);
}

TEST(Sim, WeightsNormalizedAndDecreasing) {
  for (double tau : {0.3, 1.0, 7.5, 1e4}) {
    const auto w = estimator_weights(500, tau);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (std::size_t k = 1; k < w.size(); ++k) ASSERT_LE(w[k], w[k - 1]);
  }
  EXPECT_INERTIA_ERROR(estimator_weights(10, 0.0), ErrorCode::InvalidInput);
}

TEST(Sim, VarianceOnlyFallsWithLongerMemory) {
  double prev = INFINITY;
  for (double tau : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    const double m = simulate_drift(spec(0.0, 1.0), tau, 2000);
    EXPECT_LT(m, prev) << "tau=" << tau;
    // Variance of an exponential average of unit noise, T -> infinity.
    const double r = std::exp(-1.0 / tau);
    EXPECT_NEAR(m / ((1 - r) / (1 + r)), 1.0, 0.1);
    prev = m;
  }
}

TEST(Sim, NoiselessPersistentDriftMatchesLagClosedForm) {
  const double delta = 0.05;
  for (double tau : {2.0, 5.0, 20.0, 50.0}) {
    const double r = std::exp(-1.0 / tau);
    const double lag = r / (1.0 - r);  // sum_k k r^k / sum_k r^k
    const double expected = delta * delta * lag * lag;
    EXPECT_NEAR(simulate_drift(spec(delta, 0.0), tau, 4) / expected, 1.0, 0.05) << "tau=" << tau;
  }
}

TEST(Sim, MonteCarloAgreesWithExactPersistentMse) {
  for (double tau : {3.0, 10.0}) {
    const double mc = simulate_drift(spec(0.05, 1.0, 3), tau, 4000, 2);
    EXPECT_NEAR(mc / persistent_mse(0.05, 1.0, tau, 2000), 1.0, 0.1);
  }
}

TEST(Sim, ThreadCountDoesNotChangeResult) {
  EXPECT_EQ(simulate_drift(spec(0.02, 1.0, 8), 6.0, 64, 1), simulate_drift(spec(0.02, 1.0, 8), 6.0, 64, 3));
}

TEST(Sim, AnalyticTauStarWithinOneGridStep) {
  const auto grid = geometric(0.5, std::sqrt(2.0), 20);
  for (double delta : {0.01, 0.02, 0.05, 0.1}) {
    const double star = analytic_tau_star(1.0, delta);
    const double found = grid_argmin(delta, 1.0, grid);
    EXPECT_LE(std::abs(std::log(found / star)), std::log(std::sqrt(2.0)) + 1e-9) << "delta=" << delta;
  }
  EXPECT_NEAR(analytic_tau_star(1.0, 0.05), std::cbrt(100.0), 1e-12);
}

TEST(Sim, DoublingDriftShrinksOptimalMemory) {
  const auto fine = geometric(0.5, 1.02, 300);
  for (double delta : {0.01, 0.03}) {
    const double a = grid_argmin(delta, 1.0, fine), b = grid_argmin(2 * delta, 1.0, fine);
    EXPECT_LT(b, a);
    EXPECT_NEAR(b / a, std::pow(2.0, -2.0 / 3.0), 0.06);
  }
}

TEST(Sim, SweepFindsInteriorMinimaWithNegativeSlope) {
  const auto deltas = geometric(0.01, 2.0, 4);
  const auto taus = geometric(1.0, std::sqrt(2.0), 13);
  const auto r = sweep_tau(deltas, taus, spec(0.0, 1.0, 4), 300);
  EXPECT_FALSE(r.edge_of_grid);
  EXPECT_TRUE(r.warnings.empty());
  ASSERT_EQ(r.tau_star.size(), 4u);
  EXPECT_EQ(r.points.size(), 4u * 13u);
  EXPECT_NEAR(r.slope, -2.0 / 3.0, 0.2);
  for (std::size_t i = 0; i < 4; ++i) {
    // U-shape: the minimum is strictly below both ends of its row.
    double lo = INFINITY;
    for (std::size_t k = 0; k < 13; ++k) lo = std::min(lo, r.points[i * 13 + k].mse);
    EXPECT_LT(lo, r.points[i * 13].mse);
    EXPECT_LT(lo, r.points[i * 13 + 12].mse);
  }
}

TEST(Sim, SweepFlagsEdgeOfGrid) {
  const auto r = sweep_tau(geometric(0.01, 2.0, 4), geometric(100.0, 2.0, 4), spec(0.0, 1.0), 50);
  EXPECT_TRUE(r.edge_of_grid);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_INERTIA_ERROR(sweep_tau({0.1, 0.2, 0.3}, geometric(1, 2, 4), spec(0, 1), 10), ErrorCode::InvalidInput);
  EXPECT_INERTIA_ERROR(sweep_tau(geometric(1, 2, 4), {1, 3, 2, 4}, spec(0, 1), 10), ErrorCode::InvalidInput);
}

TEST(Sim, SpecValidation) {
  EXPECT_INERTIA_ERROR(simulate_drift(spec(-0.1, 1.0), 1.0, 1), ErrorCode::InvalidConfig);
  DriftSpec s = spec(0.1, 1.0);
  s.horizon_T = 50;
  EXPECT_INERTIA_ERROR(simulate_drift(s, 1.0, 1), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(parse_drift_kind("brownian"), ErrorCode::InvalidConfig);
  EXPECT_EQ(parse_drift_kind("random-walk"), DriftKind::RandomWalk);
}

TEST(Proxy, Examples) {
  EXPECT_DOUBLE_EQ(proxy_map(0.0).value, 1.0);
  EXPECT_NEAR(proxy_map(0.875).value, 4.0, 1e-12);
  EXPECT_TRUE(proxy_map(1.0).unbounded);
  EXPECT_TRUE(proxy_map(1.5).unbounded);
  double prev = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double v = proxy_map(i / 100.0).value;
    ASSERT_GT(v, prev);
    prev = v;
  }
  EXPECT_INERTIA_ERROR(proxy_map(std::nan("")), ErrorCode::InvalidInput);
}

TEST(Proxy, TableCsv) {
  testutil::TempDir dir;
  write_proxy_table_csv({}, dir.file("p.csv"), 5);
  const auto text = testutil::slurp(dir.file("p.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
  EXPECT_EQ(text.rfind("conflict,tau_linear,tau_linear_rel,proxy_optimal_rel\n0,8,1,1\n", 0), 0u);
}
