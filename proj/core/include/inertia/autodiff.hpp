#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "inertia/attn_bias.hpp"

// Minimal tape-based reverse-mode differentiation over dense double matrices.
// Scalars are 1x1 matrices.
namespace inertia::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  int id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  const Matrix& value() const;
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Matrix& out_grad)>;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  // Records an op result; `backprop` receives the output gradient and
  // accumulates into its inputs through accumulate().
  Var record(Matrix value, bool requires_grad, Backprop backprop);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }

  // Gradient of the last backward() target; zeros when the node was unreached.
  Matrix grad(Var v) const;

  void accumulate(Var v, const Matrix& g);
  void accumulate(Var v, const Eigen::Ref<const Matrix>& g, Eigen::Index row0, Eigen::Index col0);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backprop in reverse.
  // Throws NumericalFailure when the loss is not finite.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched
    bool requires_grad = false;
    Backprop backprop;
  };

  Matrix& grad_slot(int id);

  std::vector<Node> nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);     // broadcast 1 x d over rows
Var mul(Var a, Var b);           // elementwise
Var matmul(Var a, Var b);
Var gather_rows(Var table, std::span<const int> ids);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var silu(Var x);
Var softplus(Var x);
Var sum(Var x);
Var square_sum(Var x);

// Sum over rows p with targets[p] >= 0 of log_softmax(logits.row(p))[targets[p]].
Var token_logprob_sum(Var logits, std::span<const int> targets);

struct AttentionTrace {
  // Per head, in call order: raw q.k/sqrt(d_head), pre-softmax logits
  // (raw + bias, masked) and softmax weights.
  std::vector<Matrix> raw_scores;
  std::vector<Matrix> logits;
  std::vector<Matrix> weights;
};

// Multi-head causal self-attention with an additive positional bias.
// `bias_params` optionally carries trainable bias values overriding cfg:
// 1x1 lambda for dual-zone, n_heads x 2 (lambda_h, tau_h) for matb.
Var causal_attention(Var q, Var k, Var v, int n_heads, const attn::BiasConfig& cfg,
                     int anchor_len, Var bias_params = {}, AttentionTrace* trace = nullptr);

}  // namespace inertia::ad
