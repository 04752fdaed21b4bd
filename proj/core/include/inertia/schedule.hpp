#pragma once

#include <span>

#include "inertia/embed.hpp"

namespace inertia::schedule {

// Defaults are the published TDPO-DKL constants.
struct ScheduleParams {
  double beta0 = 0.1;     // base KL coefficient
  double alpha = 0.3;     // minimum constraint ratio
  double tau_base = 8.0;  // base decay temperature, turns
  double gamma = 0.8;     // conflict sensitivity
  double tau_min = 0.5;   // decay floor, turns

  void validate() const;

  bool operator==(const ScheduleParams&) const = default;
};

struct ScheduleValues {
  double conflict = 0.0;
  double tau = 0.0;
  double beta_t = 0.0;
  double weight_t = 1.0;
};

// Max cosine similarity of the current turn against each history embedding.
double conflict_score(const embed::Embedding& current, std::span<const embed::Embedding> history);

// max(tau_min, tau_base * (1 - gamma * max(0, conflict))).
double adaptive_tau(double conflict, const ScheduleParams& p);

// beta0 * (1 - (1 - alpha) * exp(-(T - t) / tau)).
double dynamic_beta(int t, int T, double tau, const ScheduleParams& p);

// exp(-(T - t) / tau).
double temporal_weight(int t, int T, double tau);

// Full schedule for a pair at turn t of T. With no history to score against,
// tau falls back to tau_base.
ScheduleValues compute(int t, int T, double conflict, const ScheduleParams& p);
ScheduleValues compute_without_history(int t, int T, const ScheduleParams& p);

}  // namespace inertia::schedule
