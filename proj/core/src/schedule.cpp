#include "inertia/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "inertia/error.hpp"

namespace inertia::schedule {

namespace {

void check_turns(int t, int T) {
  if (t < 1) fail(ErrorCode::InvalidInput, "turn index must be >= 1, got " + std::to_string(t));
  if (t > T)
    fail(ErrorCode::InvalidInput,
         "turn t=" + std::to_string(t) + " exceeds total T=" + std::to_string(T));
}

void check_tau(double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::InvalidInput, "tau must be positive");
}

}  // namespace

void ScheduleParams::validate() const {
  if (!(beta0 > 0.0)) fail(ErrorCode::InvalidConfig, "schedule.beta0 must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorCode::InvalidConfig, "schedule.alpha must be in (0, 1]");
  if (!(tau_min > 0.0)) fail(ErrorCode::InvalidConfig, "schedule.tau_min must be > 0");
  if (!(tau_base >= tau_min)) fail(ErrorCode::InvalidConfig, "schedule.tau_base must be >= tau_min");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorCode::InvalidConfig, "schedule.gamma must be in [0, 1]");
}

double conflict_score(const embed::Embedding& current, std::span<const embed::Embedding> history) {
  if (history.empty()) fail(ErrorCode::InvalidInput, "conflict score needs a non-empty history");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& past : history) best = std::max(best, embed::cosine_similarity(current, past));
  return best;
}

double adaptive_tau(double conflict, const ScheduleParams& p) {
  if (!(conflict >= -1.0 && conflict <= 1.0))
    fail(ErrorCode::InvalidInput, "conflict must lie in [-1, 1]");
  const double raw = p.tau_base * (1.0 - p.gamma * std::max(0.0, conflict));
  return std::max(p.tau_min, raw);
}

double dynamic_beta(int t, int T, double tau, const ScheduleParams& p) {
  check_turns(t, T);
  check_tau(tau);
  const double decay = std::exp(-static_cast<double>(T - t) / tau);
  return p.beta0 * (1.0 - (1.0 - p.alpha) * decay);
}

double temporal_weight(int t, int T, double tau) {
  check_turns(t, T);
  check_tau(tau);
  return std::exp(-static_cast<double>(T - t) / tau);
}

ScheduleValues compute(int t, int T, double conflict, const ScheduleParams& p) {
  ScheduleValues v;
  v.conflict = conflict;
  v.tau = adaptive_tau(conflict, p);
  v.beta_t = dynamic_beta(t, T, v.tau, p);
  v.weight_t = temporal_weight(t, T, v.tau);
  return v;
}

ScheduleValues compute_without_history(int t, int T, const ScheduleParams& p) {
  ScheduleValues v;
  v.conflict = 0.0;
  v.tau = p.tau_base;
  v.beta_t = dynamic_beta(t, T, v.tau, p);
  v.weight_t = temporal_weight(t, T, v.tau);
  return v;
}

}  // namespace inertia::schedule
