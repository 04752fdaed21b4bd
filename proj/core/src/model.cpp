#include "inertia/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "inertia/error.hpp"
#include "inertia/rng.hpp"

namespace inertia::model {

void ModelConfig::validate() const {
  if (vocab_size <= 0) fail(ErrorCode::InvalidConfig, "model.vocab_size must be positive");
  if (d_model <= 0 || n_heads <= 0 || n_layers <= 0)
    fail(ErrorCode::InvalidConfig, "model dimensions must be positive");
  if (d_model % n_heads != 0) fail(ErrorCode::InvalidConfig, "model.d_model must be divisible by n_heads");
  if (max_seq < 2) fail(ErrorCode::InvalidConfig, "model.max_seq must be >= 2");
  if (d_ff < 0) fail(ErrorCode::InvalidConfig, "model.d_ff must be non-negative");
}

bool ModelConfig::same_shape(const ModelConfig& o) const {
  return vocab_size == o.vocab_size && d_model == o.d_model && n_heads == o.n_heads &&
         n_layers == o.n_layers && max_seq == o.max_seq && ff_width() == o.ff_width();
}

TokenSeq TokenSeq::of(std::vector<int> ids, Role role) {
  TokenSeq s;
  s.roles.assign(ids.size(), role);
  s.ids = std::move(ids);
  return s;
}

int TokenSeq::anchor_count() const {
  int n = 0;
  while (n < static_cast<int>(roles.size()) && roles[static_cast<std::size_t>(n)] == Role::Anchor) ++n;
  return n;
}

void TokenSeq::append(const TokenSeq& other) {
  ids.insert(ids.end(), other.ids.begin(), other.ids.end());
  roles.insert(roles.end(), other.roles.begin(), other.roles.end());
}

void TokenSeq::append(int id, Role role) {
  ids.push_back(id);
  roles.push_back(role);
}

void TokenSeq::validate() const {
  if (ids.size() != roles.size()) fail(ErrorCode::InvalidInput, "token ids and roles differ in length");
  const int anchors = anchor_count();
  for (std::size_t i = static_cast<std::size_t>(anchors); i < roles.size(); ++i)
    if (roles[i] == Role::Anchor) fail(ErrorCode::InvalidInput, "anchor tokens must form a prefix");
}

TokenSeq concat(const TokenSeq& a, const TokenSeq& b) {
  TokenSeq out = a;
  out.append(b);
  return out;
}

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

std::string layer_name(int l, const char* suffix) { return "layers." + std::to_string(l) + "." + suffix; }

Parameter bias_parameter(const attn::BiasConfig& bias, int n_heads) {
  if (bias.variant == attn::Variant::DualZone)
    return {"bias.lambda", Matrix::Constant(1, 1, bias.lambda), ParamGroup::Bias};
  Matrix hp(n_heads, 2);
  for (int h = 0; h < n_heads; ++h) {
    const auto& p = bias.head_params[static_cast<std::size_t>(h)];
    hp(h, 0) = p.lambda;
    hp(h, 1) = p.tau;
  }
  return {"bias.matb", std::move(hp), ParamGroup::Bias};
}

}  // namespace

TinyModel TinyModel::init(const ModelConfig& config, const attn::BiasConfig& bias) {
  config.validate();
  bias.validate(config.n_heads, config.max_seq);
  TinyModel m;
  m.config_ = config;
  Rng rng(derive_seed(config.seed, "init"));
  const int d = config.d_model, V = config.vocab_size, f = config.ff_width();
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  auto& p = m.params_;
  p.push_back({"tok_emb", gaussian(V, d, 0.5, rng), ParamGroup::Backbone});
  p.push_back({"pos_emb", gaussian(config.max_seq, d, 0.1, rng), ParamGroup::Backbone});
  for (int l = 0; l < config.n_layers; ++l) {
    p.push_back({layer_name(l, "ln1.gain"), Matrix::Ones(1, d), ParamGroup::Backbone});
    p.push_back({layer_name(l, "ln1.bias"), Matrix::Zero(1, d), ParamGroup::Backbone});
    p.push_back({layer_name(l, "attn.wq"), gaussian(d, d, w_std, rng), ParamGroup::Backbone});
    p.push_back({layer_name(l, "attn.wk"), gaussian(d, d, w_std, rng), ParamGroup::Backbone});
    p.push_back({layer_name(l, "attn.wv"), gaussian(d, d, w_std, rng), ParamGroup::Backbone});
    p.push_back({layer_name(l, "attn.wo"), gaussian(d, d, w_std / std::sqrt(2.0 * config.n_layers), rng), ParamGroup::Backbone});
    p.push_back({layer_name(l, "ln2.gain"), Matrix::Ones(1, d), ParamGroup::Backbone});
    p.push_back({layer_name(l, "ln2.bias"), Matrix::Zero(1, d), ParamGroup::Backbone});
    p.push_back({layer_name(l, "mlp.w1"), gaussian(d, f, w_std, rng), ParamGroup::Backbone});
    p.push_back({layer_name(l, "mlp.b1"), Matrix::Zero(1, f), ParamGroup::Backbone});
    p.push_back({layer_name(l, "mlp.w2"), gaussian(f, d, 1.0 / std::sqrt(static_cast<double>(f)) / std::sqrt(2.0 * config.n_layers), rng), ParamGroup::Backbone});
    p.push_back({layer_name(l, "mlp.b2"), Matrix::Zero(1, d), ParamGroup::Backbone});
  }
  p.push_back({"ln_f.gain", Matrix::Ones(1, d), ParamGroup::Backbone});
  p.push_back({"ln_f.bias", Matrix::Zero(1, d), ParamGroup::Backbone});
  p.push_back({"head.w", gaussian(d, V, w_std, rng), ParamGroup::Backbone});
  p.push_back({"head.b", Matrix::Zero(1, V), ParamGroup::Backbone});
  m.set_bias(bias);
  return m;
}

void TinyModel::set_bias(const attn::BiasConfig& bias) {
  bias.validate(config_.n_heads, config_.max_seq);
  bias_ = bias;
  std::erase_if(params_, [](const Parameter& p) { return p.group == ParamGroup::Bias; });
  if (bias_.learnable && bias_.variant != attn::Variant::None)
    params_.push_back(bias_parameter(bias_, config_.n_heads));
}

TinyModel TinyModel::from_parts(ModelConfig config, attn::BiasConfig bias, std::vector<Parameter> params) {
  config.validate();
  bias.validate(config.n_heads, config.max_seq);
  TinyModel m;
  m.config_ = config;
  m.bias_ = std::move(bias);
  m.params_ = std::move(params);
  const TinyModel shape = init(config, m.bias_);
  if (shape.params_.size() != m.params_.size()) fail(ErrorCode::InvalidInput, "parameter set does not match config");
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    const auto& want = shape.params_[i];
    const auto& got = m.params_[i];
    if (want.name != got.name || want.value.rows() != got.value.rows() || want.value.cols() != got.value.cols())
      fail(ErrorCode::InvalidInput, "tensor '" + got.name + "' does not match config");
    if (!got.value.allFinite()) fail(ErrorCode::NumericalFailure, "tensor '" + got.name + "' is not finite");
    m.params_[i].group = want.group;
  }
  return m;
}

Parameter& TinyModel::parameter(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  fail(ErrorCode::InvalidInput, "no parameter named '" + std::string(name) + "'");
}

const Parameter& TinyModel::parameter(std::string_view name) const {
  return const_cast<TinyModel*>(this)->parameter(name);
}

std::size_t TinyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

TinyModel TinyModel::frozen_copy() const {
  TinyModel copy = *this;
  copy.frozen_ = true;
  return copy;
}

std::uint64_t TinyModel::parameter_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a64(p.name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p.value.data()),
                                 static_cast<std::size_t>(p.value.size()) * sizeof(double)),
                h);
  }
  return h;
}

void TinyModel::sync_bias_from_parameters() {
  for (const auto& p : params_) {
    if (p.name == "bias.lambda") bias_.lambda = p.value(0, 0);
    if (p.name == "bias.matb")
      for (int h = 0; h < config_.n_heads; ++h)
        bias_.head_params[static_cast<std::size_t>(h)] = {p.value(h, 0), p.value(h, 1)};
  }
}

int TinyModel::anchor_len_for(const TokenSeq& seq) const {
  const int anchors = seq.anchor_count();
  return anchors > 0 ? anchors : bias_.anchor_len;
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const auto& v : values) sq += v.squaredNorm();
  return std::sqrt(sq);
}

void Gradients::add(const Gradients& other) {
  if (values.empty()) {
    *this = other;
    return;
  }
  if (other.values.size() != values.size()) fail(ErrorCode::InvalidInput, "gradient sets differ");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
}

void Gradients::scale(double s) {
  for (auto& v : values) v *= s;
}

const Matrix& Gradients::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  fail(ErrorCode::InvalidInput, "no gradient for '" + std::string(name) + "'");
}

Gradients Gradients::zeros_like(const TinyModel& m) {
  Gradients g;
  for (const auto& p : m.parameters()) {
    g.names.push_back(p.name);
    g.values.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return g;
}

Binding::Binding(ad::Tape& tape, const TinyModel& model, bool trainable)
    : tape_(&tape), model_(&model), trainable_(trainable && !model.frozen()) {
  vars_.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) vars_.push_back(tape.leaf(p.value, trainable_));
}

ad::Var Binding::param(std::string_view name) const {
  const auto& params = model_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return vars_[i];
  fail(ErrorCode::InvalidInput, "no parameter named '" + std::string(name) + "'");
}

ad::Var Binding::hidden(const TokenSeq& seq, std::vector<ad::AttentionTrace>* traces) const {
  const ModelConfig& cfg = model_->config();
  seq.validate();
  if (seq.empty()) fail(ErrorCode::InvalidInput, "empty token sequence");
  if (static_cast<int>(seq.size()) > cfg.max_seq)
    fail(ErrorCode::InvalidInput, "sequence length " + std::to_string(seq.size()) + " exceeds max_seq " +
                                      std::to_string(cfg.max_seq));
  for (int id : seq.ids)
    if (id < 0 || id >= cfg.vocab_size) fail(ErrorCode::InvalidInput, "token id " + std::to_string(id) + " out of range");

  std::vector<int> positions(seq.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  ad::Var x = ad::add(ad::gather_rows(param("tok_emb"), seq.ids), ad::gather_rows(param("pos_emb"), positions));

  const attn::BiasConfig& bias = model_->bias();
  ad::Var bias_params;
  if (bias.learnable && bias.variant == attn::Variant::DualZone) bias_params = param("bias.lambda");
  if (bias.learnable && bias.variant == attn::Variant::Matb) bias_params = param("bias.matb");
  const int anchor_len = model_->anchor_len_for(seq);

  if (traces) traces->clear();
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto P = [&](const char* s) { return param(layer_name(l, s)); };
    ad::Var h = ad::layer_norm(x, P("ln1.gain"), P("ln1.bias"));
    ad::Var q = ad::matmul(h, P("attn.wq"));
    ad::Var k = ad::matmul(h, P("attn.wk"));
    ad::Var v = ad::matmul(h, P("attn.wv"));
    ad::AttentionTrace* trace = nullptr;
    if (traces) trace = &traces->emplace_back();
    ad::Var a = ad::causal_attention(q, k, v, cfg.n_heads, bias, anchor_len, bias_params, trace);
    x = ad::add(x, ad::matmul(a, P("attn.wo")));
    ad::Var h2 = ad::layer_norm(x, P("ln2.gain"), P("ln2.bias"));
    ad::Var f = ad::silu(ad::add_row(ad::matmul(h2, P("mlp.w1")), P("mlp.b1")));
    x = ad::add(x, ad::add_row(ad::matmul(f, P("mlp.w2")), P("mlp.b2")));
  }
  return ad::layer_norm(x, param("ln_f.gain"), param("ln_f.bias"));
}

ad::Var Binding::logits(const TokenSeq& seq, std::vector<ad::AttentionTrace>* traces) const {
  return ad::add_row(ad::matmul(hidden(seq, traces), param("head.w")), param("head.b"));
}

ad::Var Binding::token_logprob(const TokenSeq& seq, const std::vector<bool>& score_target) const {
  if (score_target.size() != seq.size()) fail(ErrorCode::InvalidInput, "score mask length mismatch");
  // Only rows that predict a scored token go through the output head.
  std::vector<int> rows, targets;
  for (std::size_t p = 0; p + 1 < seq.size(); ++p)
    if (score_target[p + 1]) {
      rows.push_back(static_cast<int>(p));
      targets.push_back(seq.ids[p + 1]);
    }
  const ad::Var h = hidden(seq);
  if (rows.empty()) return ad::scale(ad::sum(h), 0.0);
  const ad::Var lg = ad::add_row(ad::matmul(ad::gather_rows(h, rows), param("head.w")), param("head.b"));
  return ad::token_logprob_sum(lg, targets);
}

ad::Var Binding::sequence_logprob(const TokenSeq& context, const TokenSeq& response) const {
  if (response.empty()) fail(ErrorCode::InvalidInput, "response must be non-empty");
  if (context.empty()) fail(ErrorCode::InvalidInput, "context must be non-empty");
  const TokenSeq full = concat(context, response);
  std::vector<bool> mask(full.size(), false);
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(context.size()), mask.end(), true);
  return token_logprob(full, mask);
}

Gradients Binding::gradients() const {
  Gradients g;
  if (!trainable_) return g;
  const auto& params = model_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    g.names.push_back(params[i].name);
    g.values.push_back(tape_->grad(vars_[i]));
  }
  return g;
}

Matrix forward_logprobs(const TinyModel& m, const TokenSeq& seq) {
  ad::Tape tape;
  const Binding b(tape, m, false);
  Matrix lg = b.logits(seq).value();
  for (Eigen::Index r = 0; r < lg.rows(); ++r) {
    const double mx = lg.row(r).maxCoeff();
    const double lse = mx + std::log((lg.row(r).array() - mx).exp().sum());
    lg.row(r).array() -= lse;
  }
  return lg;
}

double sequence_logprob(const TinyModel& m, const TokenSeq& context, const TokenSeq& response) {
  ad::Tape tape;
  const Binding b(tape, m, false);
  return b.sequence_logprob(context, response).scalar();
}

double log_ratio(const TinyModel& policy, const TinyModel& reference, const TokenSeq& context,
                 const TokenSeq& response) {
  if (!policy.config().same_shape(reference.config()))
    fail(ErrorCode::InvalidInput, "policy and reference configs differ");
  return sequence_logprob(policy, context, response) - sequence_logprob(reference, context, response);
}

Gradients backward(const Binding& binding, ad::Var loss) {
  binding.tape().backward(loss);
  return binding.gradients();
}

std::vector<ad::AttentionTrace> attention_traces(const TinyModel& m, const TokenSeq& seq) {
  ad::Tape tape;
  const Binding b(tape, m, false);
  std::vector<ad::AttentionTrace> traces;
  b.logits(seq, &traces);
  return traces;
}

DecodeResult greedy_decode(const TinyModel& m, const TokenSeq& prompt, int max_new, int stop_token) {
  DecodeResult result;
  TokenSeq seq = prompt;
  for (int step = 0; step < max_new; ++step) {
    if (static_cast<int>(seq.size()) >= m.config().max_seq) {
      result.overflow = true;
      break;
    }
    ad::Tape tape;
    const Binding b(tape, m, false);
    const Matrix& lg = b.logits(seq).value();
    Eigen::Index best = 0;
    lg.row(lg.rows() - 1).maxCoeff(&best);
    const int token = static_cast<int>(best);
    result.tokens.push_back(token);
    if (token == stop_token) break;
    seq.append(token, Role::Response);
  }
  return result;
}

}  // namespace inertia::model
