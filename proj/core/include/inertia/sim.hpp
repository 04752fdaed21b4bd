#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inertia/schedule.hpp"

namespace inertia::sim {

// persistent: one random sign per trial, then a straight line of slope
// +-delta_max. random_walk: an independent sign at every step.
enum class DriftKind { Persistent, RandomWalk };
const char* to_string(DriftKind k);
DriftKind parse_drift_kind(const std::string& name);

struct DriftSpec {
  double delta_max = 0.05;
  double noise_sigma = 1.0;
  int horizon_T = 2000;
  std::uint64_t seed = 0;
  DriftKind kind = DriftKind::Persistent;

  void validate() const;

  bool operator==(const DriftSpec&) const = default;
};

// Normalized exponential weights w[k] for lag k = T - t, k = 0..T-1.
std::vector<double> estimator_weights(int T, double tau);

// Mean squared error of the exponentially weighted estimate of theta*_T.
double simulate_drift(const DriftSpec& spec, double tau, int n_trials, int threads = 1);

// Exact MSE for persistent drift over a horizon of T steps:
// (delta * sum_k w[k] k)^2 + sigma^2 * sum_k w[k]^2.
double persistent_mse(double delta, double sigma, double tau, int T);

// Minimizer of (delta tau)^2 + sigma^2 / (2 tau).
double analytic_tau_star(double sigma, double delta);

struct SweepPoint {
  double delta = 0.0;
  double tau = 0.0;
  double mse = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<double> deltas;
  std::vector<double> tau_star;  // parallel to deltas
  double slope = 0.0;            // d ln tau* / d ln delta, least squares
  double intercept = 0.0;
  double r2 = 0.0;
  bool edge_of_grid = false;
  std::vector<std::string> warnings;
};

// Grids need >= 4 geometrically spaced points each.
SweepResult sweep_tau(const std::vector<double>& delta_grid, const std::vector<double>& tau_grid,
                      const DriftSpec& tmpl, int n_trials, int threads = 1);

void write_sweep_csv(const SweepResult& r, const std::string& path);

struct ProxyValue {
  double value = 0.0;
  bool unbounded = false;  // conflict >= 1
};

// (1 - conflict)^(-2/3).
ProxyValue proxy_map(double conflict);

// Linear schedule surrogate next to the optimal-decay proxy over conflict in
// [0, 0.95]; both normalized to 1 at zero conflict.
void write_proxy_table_csv(const schedule::ScheduleParams& p, const std::string& path, int points = 20);

}  // namespace inertia::sim
