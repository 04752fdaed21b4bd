#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace inertia::attn {

enum class Variant { None, DualZone, Matb };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);  // "none" | "dual-zone" | "matb"

struct HeadParams {
  double lambda = 0.5;
  double tau = 10.0;

  bool operator==(const HeadParams&) const = default;
};

struct BiasConfig {
  Variant variant = Variant::None;
  double lambda = 0.5;      // shared intensity (dual-zone)
  double tau_fixed = 10.0;  // spatial decay scale, token positions
  int anchor_len = 0;       // default anchor zone when a sequence carries no anchor roles
  std::vector<HeadParams> head_params;  // matb: one per head
  bool learnable = false;   // train lambda (or the matb head parameters)

  void validate(int n_heads, int max_seq) const;

  static BiasConfig none() { return {}; }
  static BiasConfig dual_zone(double lambda = 0.5, double tau_fixed = 10.0, int anchor_len = 0);
  static BiasConfig matb(std::vector<HeadParams> heads);

  bool operator==(const BiasConfig&) const = default;
};

// 0 for keys inside the anchor zone, otherwise -lambda * (i - j) / tau_fixed.
// Throws InvalidInput for j > i.
double dual_zone_bias(int i, int j, const BiasConfig& cfg);
double dual_zone_bias(int i, int j, double lambda, double tau_fixed, int anchor_len);

// -lambda_h * max(0, i - j) / tau_h. Throws InvalidConfig without head params.
double matb_bias(int i, int j, int head, const BiasConfig& cfg);

struct Radius {
  double value = 0.0;
  bool infinite = false;  // lambda == 0: no attenuation at any distance
};

// (tau_fixed / lambda) * ln(1 / epsilon), epsilon in (0, 1).
Radius effective_radius(const BiasConfig& cfg, double epsilon);

// n x n additive bias for one head (no causal mask applied).
Eigen::MatrixXd bias_matrix(int n, int head, const BiasConfig& cfg, int anchor_len);

// scores + bias with -inf above the diagonal; the pre-softmax logits.
Eigen::MatrixXd biased_logits(const Eigen::MatrixXd& scores, int head, const BiasConfig& cfg,
                              int anchor_len);

// Row softmax of biased_logits. Throws InvalidInput on non-finite scores.
Eigen::MatrixXd biased_attention(const Eigen::MatrixXd& scores, const BiasConfig& cfg,
                                 int head = 0);
Eigen::MatrixXd biased_attention(const Eigen::MatrixXd& scores, const BiasConfig& cfg, int head,
                                 int anchor_len);

// Attention mass of one query row split into the last k keys vs everything
// before them.
struct MassSplit {
  double history = 0.0;
  double recent = 0.0;
};
MassSplit attention_mass_split(const Eigen::MatrixXd& weights, int query_row, int k);

}  // namespace inertia::attn
