#include "inertia/attn_bias.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "inertia/error.hpp"

namespace inertia::attn {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::None: return "none";
    case Variant::DualZone: return "dual-zone";
    case Variant::Matb: return "matb";
  }
  return "none";
}

Variant parse_variant(const std::string& name) {
  if (name == "none") return Variant::None;
  if (name == "dual-zone") return Variant::DualZone;
  if (name == "matb") return Variant::Matb;
  fail(ErrorCode::InvalidConfig, "unknown bias variant '" + name + "'");
}

BiasConfig BiasConfig::dual_zone(double lambda, double tau_fixed, int anchor_len) {
  BiasConfig cfg;
  cfg.variant = Variant::DualZone;
  cfg.lambda = lambda;
  cfg.tau_fixed = tau_fixed;
  cfg.anchor_len = anchor_len;
  return cfg;
}

BiasConfig BiasConfig::matb(std::vector<HeadParams> heads) {
  BiasConfig cfg;
  cfg.variant = Variant::Matb;
  cfg.head_params = std::move(heads);
  return cfg;
}

void BiasConfig::validate(int n_heads, int max_seq) const {
  if (anchor_len < 0) fail(ErrorCode::InvalidConfig, "bias.anchor_len must be non-negative");
  if (anchor_len >= max_seq) fail(ErrorCode::InvalidConfig, "bias.anchor_len must be < model.max_seq");
  if (variant == Variant::DualZone) {
    if (!(lambda >= 0.0)) fail(ErrorCode::InvalidConfig, "bias.lambda must be non-negative");
    if (!(tau_fixed > 0.0)) fail(ErrorCode::InvalidConfig, "bias.tau_fixed must be positive");
  }
  if (variant == Variant::Matb) {
    if (static_cast<int>(head_params.size()) != n_heads)
      fail(ErrorCode::InvalidConfig, "matb needs one (lambda, tau) per head: got " +
                                         std::to_string(head_params.size()) + " for " +
                                         std::to_string(n_heads) + " heads");
    for (const auto& h : head_params) {
      if (!(h.lambda >= 0.0)) fail(ErrorCode::InvalidConfig, "matb lambda_h must be non-negative");
      if (!(h.tau > 0.0)) fail(ErrorCode::InvalidConfig, "matb tau_h must be positive");
    }
  }
}

double dual_zone_bias(int i, int j, double lambda, double tau_fixed, int anchor_len) {
  if (j > i)
    fail(ErrorCode::InvalidInput,
         "key " + std::to_string(j) + " lies after query " + std::to_string(i));
  if (j < anchor_len || i == j) return 0.0;
  return -lambda * static_cast<double>(i - j) / tau_fixed;
}

double dual_zone_bias(int i, int j, const BiasConfig& cfg) {
  return dual_zone_bias(i, j, cfg.lambda, cfg.tau_fixed, cfg.anchor_len);
}

double matb_bias(int i, int j, int head, const BiasConfig& cfg) {
  if (cfg.head_params.empty()) fail(ErrorCode::InvalidConfig, "matb bias without head parameters");
  if (head < 0 || head >= static_cast<int>(cfg.head_params.size()))
    fail(ErrorCode::InvalidInput, "head index out of range");
  const auto& h = cfg.head_params[static_cast<std::size_t>(head)];
  if (i <= j) return 0.0;
  return -h.lambda * static_cast<double>(i - j) / h.tau;
}

Radius effective_radius(const BiasConfig& cfg, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail(ErrorCode::InvalidInput, "epsilon must lie in (0, 1)");
  if (!(cfg.lambda >= 0.0)) fail(ErrorCode::InvalidInput, "lambda must be non-negative");
  if (cfg.lambda == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {cfg.tau_fixed / cfg.lambda * std::log(1.0 / epsilon), false};
}

Eigen::MatrixXd bias_matrix(int n, int head, const BiasConfig& cfg, int anchor_len) {
  Eigen::MatrixXd bias = Eigen::MatrixXd::Zero(n, n);
  switch (cfg.variant) {
    case Variant::None:
      break;
    case Variant::DualZone:
      for (int i = 0; i < n; ++i)
        for (int j = anchor_len; j <= i; ++j) bias(i, j) = dual_zone_bias(i, j, cfg.lambda, cfg.tau_fixed, anchor_len);
      break;
    case Variant::Matb:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) bias(i, j) = matb_bias(i, j, head, cfg);
      break;
  }
  return bias;
}

Eigen::MatrixXd biased_logits(const Eigen::MatrixXd& scores, int head, const BiasConfig& cfg,
                              int anchor_len) {
  if (scores.rows() != scores.cols()) fail(ErrorCode::InvalidInput, "attention scores must be square");
  if (!scores.allFinite()) fail(ErrorCode::InvalidInput, "attention scores contain NaN or Inf");
  const int n = static_cast<int>(scores.rows());
  Eigen::MatrixXd logits = scores;
  if (cfg.variant != Variant::None) logits += bias_matrix(n, head, cfg, anchor_len);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) logits(i, j) = neg_inf;
  return logits;
}

Eigen::MatrixXd biased_attention(const Eigen::MatrixXd& scores, const BiasConfig& cfg, int head,
                                 int anchor_len) {
  Eigen::MatrixXd w = biased_logits(scores, head, cfg, anchor_len);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double row_max = w.row(i).head(i + 1).maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double e = j <= i ? std::exp(w(i, j) - row_max) : 0.0;
      w(i, j) = e;
      total += e;
    }
    w.row(i) /= total;
  }
  return w;
}

Eigen::MatrixXd biased_attention(const Eigen::MatrixXd& scores, const BiasConfig& cfg, int head) {
  return biased_attention(scores, cfg, head, cfg.anchor_len);
}

MassSplit attention_mass_split(const Eigen::MatrixXd& weights, int query_row, int k) {
  if (k < 1) fail(ErrorCode::InvalidInput, "recent window k must be >= 1");
  if (query_row < 0 || query_row >= weights.rows()) fail(ErrorCode::InvalidInput, "query row out of range");
  MassSplit split;
  const int boundary = query_row + 1 - k;  // keys [boundary, query_row] are recent
  for (int j = 0; j <= query_row; ++j) {
    if (j >= boundary)
      split.recent += weights(query_row, j);
    else
      split.history += weights(query_row, j);
  }
  return split;
}

}  // namespace inertia::attn
