#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "inertia/attn_bias.hpp"
#include "inertia/autodiff.hpp"

namespace inertia::model {

using Matrix = Eigen::MatrixXd;

struct ModelConfig {
  int vocab_size = 256;
  int d_model = 48;
  int n_heads = 4;
  int n_layers = 2;
  int max_seq = 256;
  int d_ff = 0;  // MLP width; 0 means 2 * d_model
  std::uint64_t seed = 0;

  int ff_width() const { return d_ff > 0 ? d_ff : 2 * d_model; }
  void validate() const;
  bool same_shape(const ModelConfig& other) const;

  bool operator==(const ModelConfig&) const = default;
};

enum class Role : std::uint8_t { Anchor, Context, Response };

struct TokenSeq {
  std::vector<int> ids;
  std::vector<Role> roles;

  static TokenSeq of(std::vector<int> ids, Role role);

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  int anchor_count() const;
  void append(const TokenSeq& other);
  void append(int id, Role role);

  // Lengths equal; anchor tokens form a prefix.
  void validate() const;
};

TokenSeq concat(const TokenSeq& a, const TokenSeq& b);

enum class ParamGroup : std::uint8_t { Backbone, Bias };

struct Parameter {
  std::string name;
  Matrix value;
  ParamGroup group = ParamGroup::Backbone;
};

// Decoder-only, pre-norm blocks, learned absolute positions, SiLU MLP, untied
// output head. Attention logits receive the configured positional bias.
class TinyModel {
 public:
  TinyModel() = default;

  static TinyModel init(const ModelConfig& config, const attn::BiasConfig& bias = {});

  const ModelConfig& config() const noexcept { return config_; }
  const attn::BiasConfig& bias() const noexcept { return bias_; }

  // Replaces the bias configuration, adding/removing the trainable bias
  // parameter as needed.
  void set_bias(const attn::BiasConfig& bias);

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  std::size_t parameter_count() const;

  // A frozen deep copy: bindings never produce gradients for it.
  TinyModel frozen_copy() const;
  bool frozen() const noexcept { return frozen_; }

  // FNV-1a over names and raw parameter bytes.
  std::uint64_t parameter_hash() const;

  // Copies trainable bias values back into bias().
  void sync_bias_from_parameters();

  int anchor_len_for(const TokenSeq& seq) const;

  static TinyModel from_parts(ModelConfig config, attn::BiasConfig bias, std::vector<Parameter> params);

 private:
  ModelConfig config_;
  attn::BiasConfig bias_;
  std::vector<Parameter> params_;
  bool frozen_ = false;
};

struct Gradients {
  std::vector<std::string> names;
  std::vector<Matrix> values;

  bool empty() const noexcept { return values.empty(); }
  double norm() const;
  void add(const Gradients& other);
  void scale(double s);
  const Matrix& get(std::string_view name) const;
  static Gradients zeros_like(const TinyModel& m);
};

// Binds a model's parameters onto a tape. Parameters of a frozen model (or a
// binding created with trainable = false) enter as constants.
class Binding {
 public:
  Binding(ad::Tape& tape, const TinyModel& model, bool trainable = true);

  bool trainable() const noexcept { return trainable_; }

  ad::Tape& tape() const noexcept { return *tape_; }
  const TinyModel& model() const noexcept { return *model_; }
  ad::Var param(std::string_view name) const;

  // n x d_model final-norm activations.
  ad::Var hidden(const TokenSeq& seq, std::vector<ad::AttentionTrace>* traces = nullptr) const;

  // n x vocab next-token logits; row p predicts token p + 1.
  ad::Var logits(const TokenSeq& seq, std::vector<ad::AttentionTrace>* traces = nullptr) const;

  // Differentiable log pi(response | context).
  ad::Var sequence_logprob(const TokenSeq& context, const TokenSeq& response) const;

  // Sum of next-token log-probs over every position whose target is flagged.
  ad::Var token_logprob(const TokenSeq& seq, const std::vector<bool>& score_target) const;

  Gradients gradients() const;

 private:
  ad::Tape* tape_;
  const TinyModel* model_;
  std::vector<ad::Var> vars_;
  bool trainable_ = true;
};

// Row p: log-softmax over the vocabulary for predicting token p + 1.
Matrix forward_logprobs(const TinyModel& m, const TokenSeq& seq);

double sequence_logprob(const TinyModel& m, const TokenSeq& context, const TokenSeq& response);

// sequence_logprob(policy) - sequence_logprob(reference).
double log_ratio(const TinyModel& policy, const TinyModel& reference, const TokenSeq& context,
                 const TokenSeq& response);

// Gradients of a scalar loss for every trainable parameter of the bound model.
// Throws NumericalFailure when the loss is NaN/Inf.
Gradients backward(const Binding& binding, ad::Var loss);

// Per-layer attention traces for one forward pass.
std::vector<ad::AttentionTrace> attention_traces(const TinyModel& m, const TokenSeq& seq);

struct DecodeResult {
  std::vector<int> tokens;
  bool overflow = false;  // hit max_seq before max_new tokens
};

DecodeResult greedy_decode(const TinyModel& m, const TokenSeq& prompt, int max_new, int stop_token = -1);

// Checkpoint container: magic line, one-line JSON header, raw little-endian doubles.
inline constexpr std::string_view kCheckpointMagic = "INERTIA-LAB-CKPT-1";
void save_checkpoint(const TinyModel& m, const std::string& path);
TinyModel load_checkpoint(const std::string& path);

}  // namespace inertia::model
