#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "inertia/model.hpp"
#include "inertia/schedule.hpp"

namespace inertia::align {

using model::Gradients;
using model::TinyModel;
using model::TokenSeq;

// A preference pair in token space. t and T are dialogue turn indices;
// conflict is the max cosine of the final user turn against earlier ones.
struct TokenPair {
  TokenSeq context;
  TokenSeq chosen;
  TokenSeq rejected;
  int t = 1;
  int T = 1;
  double conflict = 0.0;
  bool has_history = true;  // false: no earlier user turn, tau = tau_base
};

enum class LossKind { Dpo, TdpoDkl };
const char* to_string(LossKind k);
LossKind parse_loss_kind(const std::string& name);  // "dpo" | "tdpo-dkl"

struct LossBreakdown {
  double margin = 0.0;
  double beta_eff = 0.0;
  double weight_eff = 1.0;
  double loss = 0.0;
  double grad_scale = 0.0;  // beta * sigmoid(-beta * margin)
  double grad_norm_recent = 0.0;
  double grad_norm_history = 0.0;
};

// Throws NumericalFailure unless loss == weight * softplus(-beta * margin)
// within 1e-9 and 0 < grad_scale < beta (where representable).
void check_breakdown(const LossBreakdown& b);

double softplus(double x);
double sigmoid(double x);

// -ln sigmoid(beta * margin), via softplus(-beta * margin).
double dpo_loss(double margin, double beta);

// beta * sigmoid(-beta * margin) = -d dpo_loss / d margin.
double grad_scale(double beta, double margin);

LossBreakdown tdpo_dkl_loss(double margin, const schedule::ScheduleValues& sched);
LossBreakdown dpo_breakdown(double margin, double beta);

// Schedule values a pair sees under each loss: dpo uses beta0 and unit weight.
schedule::ScheduleValues pair_schedule(const TokenPair& pair, LossKind kind, const schedule::ScheduleParams& p);

// Reference log-probs are constant during training; computed once per pair.
struct RefLogprobs {
  double chosen = 0.0;
  double rejected = 0.0;
};
RefLogprobs reference_logprobs(const TinyModel& reference, const TokenPair& pair);
std::vector<RefLogprobs> reference_logprobs(const TinyModel& reference, std::span<const TokenPair> pairs,
                                            int threads = 1);

double margin(const TinyModel& policy, const TinyModel& reference, const TokenPair& pair);
double margin(const TinyModel& policy, const RefLogprobs& ref, const TokenPair& pair);

LossBreakdown tdpo_dkl_loss(const TinyModel& policy, const TinyModel& reference, const TokenPair& pair,
                            const schedule::ScheduleParams& p);

struct PairGradient {
  LossBreakdown breakdown;
  Gradients grads;
};

// Loss and parameter gradients of one pair.
PairGradient pair_gradient(const TinyModel& policy, const RefLogprobs& ref, const TokenPair& pair, LossKind kind,
                           const schedule::ScheduleParams& p);

// Differentiable per-pair loss on an existing binding; used by gradient checks.
ad::Var pair_loss(const model::Binding& binding, const RefLogprobs& ref, const TokenPair& pair,
                  const schedule::ScheduleValues& sched, double* margin_out = nullptr);

struct SnrResult {
  double snr = 0.0;
  bool infinite = false;  // one partition empty
  double grad_norm_recent = 0.0;
  double grad_norm_history = 0.0;
};

// Splits per-pair gradients by whether T - t < k ("recent") and returns
// ||sum recent|| / max(||sum history||, 1e-12).
SnrResult gradient_snr(const TinyModel& policy, const TinyModel& reference, std::span<const TokenPair> batch,
                       int k, LossKind kind, const schedule::ScheduleParams& p, int threads = 1);

struct TrainSettings {
  double backbone_lr = 8e-6;
  double bias_lr = 1e-4;
  int batch_size = 32;
  int epochs = 6;
  double moment1 = 0.9;
  double moment2 = 0.999;
  double weight_decay = 0.0;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::TdpoDkl;

  void validate() const;

  bool operator==(const TrainSettings&) const = default;
};

// Decoupled weight decay Adam over the model's two parameter groups.
class AdamW {
 public:
  AdamW(const TinyModel& m, double backbone_lr, double bias_lr, double beta1, double beta2, double eps,
        double weight_decay);

  void step(TinyModel& m, const Gradients& g);
  long steps() const noexcept { return t_; }

 private:
  double lr_[2];
  double b1_, b2_, eps_, wd_;
  long t_ = 0;
  std::vector<model::Matrix> m_, v_;
};

// Rescales g in place so that its global norm is at most max_norm. Returns
// the pre-clip norm.
double clip_global_norm(Gradients& g, double max_norm);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double margin_acc = 0.0;
  double val_ppl = 0.0;
  double mean_beta_eff = 0.0;
  double mean_w_eff = 0.0;
};

struct TrainReport {
  double init_val_ppl = 0.0;
  double init_margin_acc = 0.0;
  std::vector<EpochStats> epochs;
  long steps = 0;
};

void write_report_csv(const TrainReport& r, const std::string& path);

// Fraction of pairs whose margin is strictly positive.
double margin_accuracy(const TinyModel& policy, const TinyModel& reference, std::span<const TokenPair> pairs,
                       int threads = 1);

// exp(mean next-token NLL over the chosen responses).
double validation_ppl(const TinyModel& m, std::span<const TokenPair> pairs, int threads = 1);

using EpochCallback = std::function<void(const TinyModel&, const EpochStats&)>;

// Preference training. The reference must be frozen. On a non-finite loss the
// policy is restored to its last good parameters and NumericalFailure is thrown.
TrainReport train(TinyModel& policy, const TinyModel& reference, std::span<const TokenPair> train_pairs,
                  std::span<const TokenPair> val_pairs, const TrainSettings& settings,
                  const schedule::ScheduleParams& sched, int threads = 1, const EpochCallback& on_epoch = {});

struct PretrainSettings {
  double lr = 3e-3;
  int epochs = 1;
  int batch_size = 4;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const PretrainSettings&) const = default;
};

// A warm-up sequence; score[p] marks tokens whose prediction is trained.
struct LmExample {
  TokenSeq seq;
  std::vector<bool> score;
};

// Whole-sequence example scoring every token after the first.
LmExample full_example(TokenSeq seq);

// Next-token language-model warm-up. Returns the mean per-scored-token NLL of
// each epoch.
std::vector<double> pretrain(TinyModel& m, std::span<const LmExample> examples, const PretrainSettings& s,
                             int threads = 1);

}  // namespace inertia::align
