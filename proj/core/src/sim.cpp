#include "inertia/sim.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "inertia/error.hpp"
#include "inertia/parallel.hpp"
#include "inertia/rng.hpp"

namespace inertia::sim {

const char* to_string(DriftKind k) { return k == DriftKind::Persistent ? "persistent" : "random-walk"; }

DriftKind parse_drift_kind(const std::string& name) {
  if (name == "persistent") return DriftKind::Persistent;
  if (name == "random-walk") return DriftKind::RandomWalk;
  fail(ErrorCode::InvalidConfig, "unknown drift kind '" + name + "' (persistent | random-walk)");
}

void DriftSpec::validate() const {
  if (!(delta_max >= 0.0) || !std::isfinite(delta_max)) fail(ErrorCode::InvalidConfig, "delta_max must be >= 0");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail(ErrorCode::InvalidConfig, "noise_sigma must be >= 0");
  if (horizon_T < 100) fail(ErrorCode::InvalidConfig, "horizon_T must be >= 100");
}

std::vector<double> estimator_weights(int T, double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::InvalidInput, "tau must be positive");
  if (T < 1) fail(ErrorCode::InvalidInput, "horizon must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(T));
  double total = 0.0;
  for (int k = 0; k < T; ++k) total += (w[static_cast<std::size_t>(k)] = std::exp(-k / tau));
  for (double& x : w) x /= total;
  return w;
}

double simulate_drift(const DriftSpec& spec, double tau, int n_trials, int threads) {
  spec.validate();
  if (!(tau > 0.0)) fail(ErrorCode::InvalidInput, "tau must be positive");
  if (n_trials < 1) fail(ErrorCode::InvalidInput, "n_trials must be >= 1");
  const double r = std::exp(-1.0 / tau);
  std::vector<double> err2(static_cast<std::size_t>(n_trials));
  parallel_for(err2.size(), threads, [&](std::size_t trial) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(trial)));
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sign = (rng() >> 63) ? 1.0 : -1.0;
    double theta = 0.0, num = 0.0, den = 0.0;
    for (int t = 1; t <= spec.horizon_T; ++t) {
      const double step = spec.kind == DriftKind::Persistent ? sign : ((rng() >> 63) ? 1.0 : -1.0);
      theta += step * spec.delta_max;
      const double y = theta + spec.noise_sigma * noise(rng);
      num = r * num + y;
      den = r * den + 1.0;
    }
    const double e = num / den - theta;
    err2[trial] = e * e;
  });
  double sum = 0.0;
  for (double e : err2) sum += e;
  return sum / n_trials;
}

double persistent_mse(double delta, double sigma, double tau, int T) {
  const auto w = estimator_weights(T, tau);
  double lag = 0.0, sq = 0.0;
  for (int k = 0; k < T; ++k) {
    lag += w[static_cast<std::size_t>(k)] * k;
    sq += w[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(k)];
  }
  return (delta * lag) * (delta * lag) + sigma * sigma * sq;
}

double analytic_tau_star(double sigma, double delta) {
  if (!(delta > 0.0)) fail(ErrorCode::InvalidInput, "delta must be positive");
  return std::cbrt(sigma * sigma / (4.0 * delta * delta));
}

namespace {

void check_grid(const std::vector<double>& g, const char* name) {
  if (g.size() < 4) fail(ErrorCode::InvalidInput, std::string(name) + " needs at least 4 points");
  for (double x : g)
    if (!(x > 0.0)) fail(ErrorCode::InvalidInput, std::string(name) + " values must be positive");
  // Roughly geometric grids such as 0.01,0.02,0.05,... are accepted; only
  // strict increase is enforced.
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1])) fail(ErrorCode::InvalidInput, std::string(name) + " must be increasing");
}

}  // namespace

SweepResult sweep_tau(const std::vector<double>& delta_grid, const std::vector<double>& tau_grid,
                      const DriftSpec& tmpl, int n_trials, int threads) {
  check_grid(delta_grid, "delta grid");
  check_grid(tau_grid, "tau grid");
  SweepResult res;
  for (double delta : delta_grid) {
    DriftSpec spec = tmpl;
    spec.delta_max = delta;
    std::size_t best = 0;
    double best_mse = 0.0;
    for (std::size_t k = 0; k < tau_grid.size(); ++k) {
      const double mse = simulate_drift(spec, tau_grid[k], n_trials, threads);
      res.points.push_back({delta, tau_grid[k], mse});
      if (k == 0 || mse < best_mse) {
        best = k;
        best_mse = mse;
      }
    }
    res.deltas.push_back(delta);
    res.tau_star.push_back(tau_grid[best]);
    if (best == 0 || best + 1 == tau_grid.size()) {
      res.edge_of_grid = true;
      res.warnings.push_back("EdgeOfGrid: tau* for delta=" + std::to_string(delta) + " sits at the grid boundary");
    }
  }
  const std::size_t n = res.deltas.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(res.deltas[i]), y = std::log(res.tau_star[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double dn = static_cast<double>(n);
  const double var = sxx - sx * sx / dn;
  res.slope = (sxy - sx * sy / dn) / var;
  res.intercept = (sy - res.slope * sx) / dn;
  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / dn;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(res.deltas[i]), y = std::log(res.tau_star[i]);
    const double fit = res.intercept + res.slope * x;
    ss_res += (y - fit) * (y - fit);
    ss_tot += (y - ybar) * (y - ybar);
  }
  res.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  return res;
}

void write_sweep_csv(const SweepResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidInput, "cannot write " + path);
  out.precision(12);
  out << "delta,tau,mse\n";
  for (const auto& p : r.points) out << p.delta << ',' << p.tau << ',' << p.mse << '\n';
  out << "\ndelta,tau_star\n";
  for (std::size_t i = 0; i < r.deltas.size(); ++i) out << r.deltas[i] << ',' << r.tau_star[i] << '\n';
  out << "\nslope,intercept,r2\n" << r.slope << ',' << r.intercept << ',' << r.r2 << '\n';
  for (const auto& w : r.warnings) out << "# " << w << '\n';
}

ProxyValue proxy_map(double conflict) {
  if (std::isnan(conflict)) fail(ErrorCode::InvalidInput, "conflict is NaN");
  if (conflict >= 1.0) return {std::numeric_limits<double>::infinity(), true};
  return {std::pow(1.0 - conflict, -2.0 / 3.0), false};
}

void write_proxy_table_csv(const schedule::ScheduleParams& p, const std::string& path, int points) {
  if (points < 2) fail(ErrorCode::InvalidInput, "need at least 2 table points");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidInput, "cannot write " + path);
  out.precision(10);
  out << "conflict,tau_linear,tau_linear_rel,proxy_optimal_rel\n";
  const double base = schedule::adaptive_tau(0.0, p);
  for (int i = 0; i < points; ++i) {
    const double c = 0.95 * i / (points - 1);
    const double tau = schedule::adaptive_tau(c, p);
    // The proxy grows with conflict as a *relative* optimum; reported next to
    // the linear schedule, which shrinks, purely for documentation.
    out << c << ',' << tau << ',' << tau / base << ',' << proxy_map(c).value << '\n';
  }
}

}  // namespace inertia::sim
