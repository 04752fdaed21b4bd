#include "inertia/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "inertia/error.hpp"

namespace inertia::ad {

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) fail(ErrorCode::InvalidInput, "scalar() on a non-scalar node");
  return v(0, 0);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, bool requires_grad, Backprop backprop) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad,
                        requires_grad ? std::move(backprop) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  if (!requires_grad(v)) return;
  grad_slot(v.id()) += g;
}

void Tape::accumulate(Var v, const Eigen::Ref<const Matrix>& g, Eigen::Index row0, Eigen::Index col0) {
  if (!requires_grad(v)) return;
  grad_slot(v.id()).block(row0, col0, g.rows(), g.cols()) += g;
}

void Tape::backward(Var loss) {
  const Matrix& lv = value(loss);
  if (lv.size() != 1) fail(ErrorCode::InvalidInput, "backward() needs a scalar loss");
  if (!std::isfinite(lv(0, 0))) fail(ErrorCode::NumericalFailure, "loss is not finite");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_slot(loss.id())(0, 0) = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backprop || n.grad.size() == 0) continue;
    // Copy: the callback may accumulate into other nodes only, but keep the
    // gradient stable regardless of storage.
    const Matrix g = n.grad;
    n.backprop(*this, g);
  }
}

namespace {

bool any_grad(Var a) { return a.tape().requires_grad(a); }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) fail(ErrorCode::InvalidInput, "operands live on different tapes");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  same_tape(a, b);
  Tape& t = a.tape();
  return t.record(a.value() + b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  Tape& t = a.tape();
  return t.record(a.value() - b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, Matrix(-g));
  });
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  return t.record(a.value() * s, any_grad(a), [a, s](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(g * s));
  });
}

Var add_row(Var a, Var row) {
  same_tape(a, row);
  if (row.value().rows() != 1 || row.value().cols() != a.value().cols())
    fail(ErrorCode::InvalidInput, "add_row expects a 1 x cols row vector");
  Tape& t = a.tape();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), any_grad(a, row), [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(row, Matrix(g.colwise().sum()));
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = a.tape();
  return t.record(a.value().cwiseProduct(b.value()), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, Matrix(g.cwiseProduct(b.value())));
    if (tp.requires_grad(b)) tp.accumulate(b, Matrix(g.cwiseProduct(a.value())));
  });
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  if (a.value().cols() != b.value().rows()) fail(ErrorCode::InvalidInput, "matmul shape mismatch");
  Tape& t = a.tape();
  return t.record(a.value() * b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, Matrix(g * b.value().transpose()));
    if (tp.requires_grad(b)) tp.accumulate(b, Matrix(a.value().transpose() * g));
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tv.rows()) fail(ErrorCode::InvalidInput, "row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = tv.row(ids[r]);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  Tape& t = table.tape();
  return t.record(std::move(out), any_grad(table), [table, rows = std::move(rows)](Tape& tp, const Matrix& g) {
    Matrix dt = Matrix::Zero(table.value().rows(), table.value().cols());
    for (std::size_t r = 0; r < rows.size(); ++r) dt.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
    tp.accumulate(table, dt);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  if (gain.value().cols() != d || bias.value().cols() != d)
    fail(ErrorCode::InvalidInput, "layer_norm parameter width mismatch");
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (xv.row(r).array() - mean) * (*inv_std)(r);
  }
  Matrix out = xhat->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const bool rg = any_grad(x) || any_grad(gain) || any_grad(bias);
  return x.tape().record(std::move(out), rg, [x, gain, bias, xhat, inv_std](Tape& tp, const Matrix& g) {
    tp.accumulate(gain, Matrix(g.cwiseProduct(*xhat).colwise().sum()));
    tp.accumulate(bias, Matrix(g.colwise().sum()));
    if (!tp.requires_grad(x)) return;
    const Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double m1 = dxhat.row(r).mean();
      const double m2 = dxhat.row(r).cwiseProduct(xhat->row(r)).mean();
      dx.row(r) = (*inv_std)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
    }
    tp.accumulate(x, dx);
  });
}

Var silu(Var x) {
  const Matrix& xv = x.value();
  Matrix out = xv.unaryExpr([](double v) { return v * sigmoid(v); });
  return x.tape().record(std::move(out), any_grad(x), [x](Tape& tp, const Matrix& g) {
    const Matrix d = x.value().unaryExpr([](double v) {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    });
    tp.accumulate(x, Matrix(g.cwiseProduct(d)));
  });
}

Var softplus(Var x) {
  Matrix out = x.value().unaryExpr([](double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  return x.tape().record(std::move(out), any_grad(x), [x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, Matrix(g.cwiseProduct(x.value().unaryExpr([](double v) { return sigmoid(v); }))));
  });
}

Var sum(Var x) {
  return x.tape().record(Matrix::Constant(1, 1, x.value().sum()), any_grad(x), [x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, Matrix(Matrix::Constant(x.value().rows(), x.value().cols(), g(0, 0))));
  });
}

Var square_sum(Var x) {
  return x.tape().record(Matrix::Constant(1, 1, x.value().squaredNorm()), any_grad(x),
                         [x](Tape& tp, const Matrix& g) { tp.accumulate(x, Matrix(2.0 * g(0, 0) * x.value())); });
}

Var token_logprob_sum(Var logits, std::span<const int> targets) {
  const Matrix& lv = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows())
    fail(ErrorCode::InvalidInput, "one target slot per logits row required");
  auto probs = std::make_shared<Matrix>(lv.rows(), lv.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const double m = lv.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (lv.row(r).array() - m).exp();
    const double z = e.sum();
    probs->row(r) = e / z;
    const int target = targets[static_cast<std::size_t>(r)];
    if (target < 0) continue;
    if (target >= lv.cols()) fail(ErrorCode::InvalidInput, "target id out of range");
    total += lv(r, target) - m - std::log(z);
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape().record(Matrix::Constant(1, 1, total), any_grad(logits),
                              [logits, probs, tg = std::move(tg)](Tape& tp, const Matrix& g) {
    Matrix d = Matrix::Zero(probs->rows(), probs->cols());
    for (Eigen::Index r = 0; r < probs->rows(); ++r) {
      const int target = tg[static_cast<std::size_t>(r)];
      if (target < 0) continue;
      d.row(r) = -g(0, 0) * probs->row(r);
      d(r, target) += g(0, 0);
    }
    tp.accumulate(logits, d);
  });
}

Var causal_attention(Var q, Var k, Var v, int n_heads, const attn::BiasConfig& cfg, int anchor_len,
                     Var bias_params, AttentionTrace* trace) {
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  const Eigen::Index n = Q.rows(), d = Q.cols();
  if (K.rows() != n || V.rows() != n || K.cols() != d || V.cols() != d)
    fail(ErrorCode::InvalidInput, "q, k, v shapes differ");
  if (n_heads <= 0 || d % n_heads != 0) fail(ErrorCode::InvalidInput, "d_model not divisible by heads");
  const Eigen::Index dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // Bias values: trainable parameters override the static config.
  attn::BiasConfig eff = cfg;
  if (bias_params.valid()) {
    const Matrix& bp = bias_params.value();
    if (cfg.variant == attn::Variant::DualZone) {
      eff.lambda = bp(0, 0);
    } else if (cfg.variant == attn::Variant::Matb) {
      eff.head_params.resize(static_cast<std::size_t>(n_heads));
      for (int h = 0; h < n_heads; ++h) eff.head_params[static_cast<std::size_t>(h)] = {bp(h, 0), bp(h, 1)};
    }
  }

  auto weights = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(n_heads));
  Matrix out(n, d);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int h = 0; h < n_heads; ++h) {
    const auto Qh = Q.middleCols(h * dh, dh);
    const auto Kh = K.middleCols(h * dh, dh);
    Matrix raw = (Qh * Kh.transpose()) * inv_sqrt;
    Matrix logits = raw;
    if (eff.variant != attn::Variant::None) logits += attn::bias_matrix(static_cast<int>(n), h, eff, anchor_len);
    Matrix& A = (*weights)[static_cast<std::size_t>(h)];
    A = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) logits(i, j) = neg_inf;
      const double m = logits.row(i).head(i + 1).maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        A(i, j) = std::exp(logits(i, j) - m);
        z += A(i, j);
      }
      A.row(i).head(i + 1) /= z;
    }
    out.middleCols(h * dh, dh) = A * V.middleCols(h * dh, dh);
    if (trace) {
      trace->raw_scores.push_back(std::move(raw));
      trace->logits.push_back(std::move(logits));
      trace->weights.push_back(A);
    }
  }

  const bool rg = any_grad(q) || any_grad(k) || any_grad(v) ||
                  (bias_params.valid() && any_grad(bias_params));
  return q.tape().record(std::move(out), rg,
                         [q, k, v, bias_params, weights, eff, n_heads, dh, inv_sqrt, anchor_len](Tape& tp, const Matrix& g) {
    const Matrix& Q = q.value();
    const Matrix& K = k.value();
    const Matrix& V = v.value();
    const Eigen::Index n = Q.rows();
    Matrix dQ = Matrix::Zero(n, Q.cols()), dK = Matrix::Zero(n, K.cols()), dV = Matrix::Zero(n, V.cols());
    const bool bias_grad = bias_params.valid() && tp.requires_grad(bias_params);
    Matrix dbias;
    if (bias_grad) dbias = Matrix::Zero(bias_params.value().rows(), bias_params.value().cols());
    for (int h = 0; h < n_heads; ++h) {
      const Matrix& A = (*weights)[static_cast<std::size_t>(h)];
      const auto gh = g.middleCols(h * dh, dh);
      dV.middleCols(h * dh, dh) = A.transpose() * gh;
      const Matrix dA = gh * V.middleCols(h * dh, dh).transpose();
      const Eigen::VectorXd rowdot = dA.cwiseProduct(A).rowwise().sum();
      Matrix dS = A.cwiseProduct(dA.colwise() - rowdot);
      if (bias_grad) {
        if (eff.variant == attn::Variant::DualZone) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = anchor_len; j <= i; ++j) acc += dS(i, j) * static_cast<double>(i - j);
          dbias(0, 0) += -acc / eff.tau_fixed;
        } else if (eff.variant == attn::Variant::Matb) {
          const auto& hp = eff.head_params[static_cast<std::size_t>(h)];
          double acc = 0.0;
          for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) acc += dS(i, j) * static_cast<double>(i - j);
          dbias(h, 0) += -acc / hp.tau;
          dbias(h, 1) += acc * hp.lambda / (hp.tau * hp.tau);
        }
      }
      dS *= inv_sqrt;
      dQ.middleCols(h * dh, dh) = dS * K.middleCols(h * dh, dh);
      dK.middleCols(h * dh, dh) = dS.transpose() * Q.middleCols(h * dh, dh);
    }
    tp.accumulate(q, dQ);
    tp.accumulate(k, dK);
    tp.accumulate(v, dV);
    if (bias_grad) tp.accumulate(bias_params, dbias);
  });
}

}  // namespace inertia::ad
