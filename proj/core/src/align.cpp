#include "inertia/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "inertia/error.hpp"
#include "inertia/parallel.hpp"
#include "inertia/rng.hpp"

namespace inertia::align {

const char* to_string(LossKind k) { return k == LossKind::Dpo ? "dpo" : "tdpo-dkl"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "dpo") return LossKind::Dpo;
  if (name == "tdpo-dkl") return LossKind::TdpoDkl;
  fail(ErrorCode::InvalidConfig, "unknown loss kind '" + name + "' (expected dpo | tdpo-dkl)");
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dpo_loss(double margin, double beta) { return softplus(-beta * margin); }

double grad_scale(double beta, double margin) { return beta * sigmoid(-beta * margin); }

void check_breakdown(const LossBreakdown& b) {
  const double expect = b.weight_eff * softplus(-b.beta_eff * b.margin);
  if (!std::isfinite(b.loss) || std::abs(b.loss - expect) > 1e-9 * std::max(1.0, std::abs(expect)))
    fail(ErrorCode::NumericalFailure, "loss breakdown violates loss = w * softplus(-beta * M)");
  if (b.grad_scale < 0.0 || b.grad_scale > b.beta_eff)
    fail(ErrorCode::NumericalFailure, "gradient scale outside [0, beta]");
}

LossBreakdown tdpo_dkl_loss(double margin, const schedule::ScheduleValues& sched) {
  LossBreakdown b;
  b.margin = margin;
  b.beta_eff = sched.beta_t;
  b.weight_eff = sched.weight_t;
  b.loss = sched.weight_t * dpo_loss(margin, sched.beta_t);
  b.grad_scale = grad_scale(sched.beta_t, margin);
  check_breakdown(b);
  return b;
}

LossBreakdown dpo_breakdown(double margin, double beta) {
  schedule::ScheduleValues s;
  s.beta_t = beta;
  s.weight_t = 1.0;
  return tdpo_dkl_loss(margin, s);
}

schedule::ScheduleValues pair_schedule(const TokenPair& pair, LossKind kind, const schedule::ScheduleParams& p) {
  if (kind == LossKind::Dpo) {
    p.validate();
    schedule::ScheduleValues s;
    s.conflict = pair.conflict;
    s.tau = std::numeric_limits<double>::infinity();
    s.beta_t = p.beta0;
    s.weight_t = 1.0;
    return s;
  }
  return pair.has_history ? schedule::compute(pair.t, pair.T, pair.conflict, p)
                          : schedule::compute_without_history(pair.t, pair.T, p);
}

RefLogprobs reference_logprobs(const TinyModel& reference, const TokenPair& pair) {
  return {model::sequence_logprob(reference, pair.context, pair.chosen),
          model::sequence_logprob(reference, pair.context, pair.rejected)};
}

std::vector<RefLogprobs> reference_logprobs(const TinyModel& reference, std::span<const TokenPair> pairs,
                                            int threads) {
  std::vector<RefLogprobs> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out[i] = reference_logprobs(reference, pairs[i]); });
  return out;
}

double margin(const TinyModel& policy, const RefLogprobs& ref, const TokenPair& pair) {
  const double c = model::sequence_logprob(policy, pair.context, pair.chosen) - ref.chosen;
  const double r = model::sequence_logprob(policy, pair.context, pair.rejected) - ref.rejected;
  return c - r;
}

double margin(const TinyModel& policy, const TinyModel& reference, const TokenPair& pair) {
  if (!policy.config().same_shape(reference.config()))
    fail(ErrorCode::InvalidInput, "policy and reference configs differ");
  return model::log_ratio(policy, reference, pair.context, pair.chosen) -
         model::log_ratio(policy, reference, pair.context, pair.rejected);
}

LossBreakdown tdpo_dkl_loss(const TinyModel& policy, const TinyModel& reference, const TokenPair& pair,
                            const schedule::ScheduleParams& p) {
  return tdpo_dkl_loss(margin(policy, reference, pair), pair_schedule(pair, LossKind::TdpoDkl, p));
}

ad::Var pair_loss(const model::Binding& binding, const RefLogprobs& ref, const TokenPair& pair,
                  const schedule::ScheduleValues& sched, double* margin_out) {
  ad::Tape& tape = binding.tape();
  const ad::Var lc = binding.sequence_logprob(pair.context, pair.chosen);
  const ad::Var lr = binding.sequence_logprob(pair.context, pair.rejected);
  const ad::Var m = ad::add(ad::sub(lc, lr), tape.scalar(ref.rejected - ref.chosen));
  if (margin_out) *margin_out = (lc.scalar() - ref.chosen) - (lr.scalar() - ref.rejected);
  return ad::scale(ad::softplus(ad::scale(m, -sched.beta_t)), sched.weight_t);
}

PairGradient pair_gradient(const TinyModel& policy, const RefLogprobs& ref, const TokenPair& pair, LossKind kind,
                           const schedule::ScheduleParams& p) {
  const schedule::ScheduleValues sched = pair_schedule(pair, kind, p);
  ad::Tape tape;
  const model::Binding binding(tape, policy);
  double m = 0.0;
  const ad::Var loss = pair_loss(binding, ref, pair, sched, &m);
  PairGradient out;
  out.breakdown = tdpo_dkl_loss(m, sched);
  if (std::abs(out.breakdown.loss - loss.scalar()) > 1e-9 * std::max(1.0, std::abs(loss.scalar())))
    fail(ErrorCode::NumericalFailure, "tape loss disagrees with the scalar loss");
  out.grads = model::backward(binding, loss);
  return out;
}

SnrResult gradient_snr(const TinyModel& policy, const TinyModel& reference, std::span<const TokenPair> batch,
                       int k, LossKind kind, const schedule::ScheduleParams& p, int threads) {
  if (k < 1) fail(ErrorCode::InvalidInput, "recent window k must be >= 1");
  if (batch.empty()) fail(ErrorCode::InvalidInput, "empty batch");
  const auto refs = reference_logprobs(reference, batch, threads);
  std::vector<Gradients> grads(batch.size());
  parallel_for(batch.size(), threads,
               [&](std::size_t i) { grads[i] = pair_gradient(policy, refs[i], batch[i], kind, p).grads; });
  Gradients recent, history;
  bool any_recent = false, any_history = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].T - batch[i].t < k) {
      recent.add(grads[i]);
      any_recent = true;
    } else {
      history.add(grads[i]);
      any_history = true;
    }
  }
  SnrResult r;
  r.grad_norm_recent = any_recent ? recent.norm() : 0.0;
  r.grad_norm_history = any_history ? history.norm() : 0.0;
  if (!any_recent || !any_history) {
    r.infinite = true;
    r.snr = std::numeric_limits<double>::infinity();
    return r;
  }
  r.snr = r.grad_norm_recent / std::max(r.grad_norm_history, 1e-12);
  return r;
}

void TrainSettings::validate() const {
  if (!(backbone_lr >= 0.0) || !(bias_lr >= 0.0)) fail(ErrorCode::InvalidConfig, "learning rates must be >= 0");
  if (batch_size <= 0) fail(ErrorCode::InvalidConfig, "train.batch_size must be positive");
  if (epochs <= 0) fail(ErrorCode::InvalidConfig, "train.epochs must be positive");
  if (!(moment1 > 0.0 && moment1 < 1.0) || !(moment2 > 0.0 && moment2 < 1.0))
    fail(ErrorCode::InvalidConfig, "train moments must lie in (0, 1)");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::InvalidConfig, "train.weight_decay must be >= 0");
  if (!(adam_eps > 0.0)) fail(ErrorCode::InvalidConfig, "train.adam_eps must be positive");
}

AdamW::AdamW(const TinyModel& m, double backbone_lr, double bias_lr, double beta1, double beta2, double eps,
             double weight_decay)
    : lr_{backbone_lr, bias_lr}, b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {
  for (const auto& p : m.parameters()) {
    m_.push_back(model::Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(model::Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(TinyModel& m, const Gradients& g) {
  auto& params = m.parameters();
  if (g.values.size() != params.size()) fail(ErrorCode::InvalidInput, "gradient/parameter count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  bool bias_touched = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const double lr = lr_[p.group == model::ParamGroup::Bias ? 1 : 0];
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g.values[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.values[i].cwiseAbs2();
    if (lr == 0.0) continue;
    if (wd_ > 0.0 && p.group == model::ParamGroup::Backbone) p.value *= (1.0 - lr * wd_);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    if (p.group == model::ParamGroup::Bias) {
      bias_touched = true;
      // Intensities stay non-negative, temperatures positive.
      p.value.col(0) = p.value.col(0).cwiseMax(0.0);
      if (p.value.cols() > 1) p.value.col(1) = p.value.col(1).cwiseMax(1e-3);
    }
  }
  if (bias_touched) m.sync_bias_from_parameters();
}

double clip_global_norm(Gradients& g, double max_norm) {
  const double n = g.norm();
  if (max_norm > 0.0 && n > max_norm) g.scale(max_norm / n);
  return n;
}

void write_report_csv(const TrainReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::InvalidInput, "cannot write report " + path);
  out.precision(10);
  out << "epoch,mean_loss,margin_acc,val_ppl,mean_beta_eff,mean_w_eff\n";
  out << 0 << ",," << r.init_margin_acc << ',' << r.init_val_ppl << ",,\n";
  for (const auto& e : r.epochs)
    out << e.epoch << ',' << e.mean_loss << ',' << e.margin_acc << ',' << e.val_ppl << ',' << e.mean_beta_eff << ','
        << e.mean_w_eff << '\n';
}

double margin_accuracy(const TinyModel& policy, const TinyModel& reference, std::span<const TokenPair> pairs,
                       int threads) {
  if (pairs.empty()) return 0.0;
  std::vector<char> ok(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) { ok[i] = margin(policy, reference, pairs[i]) > 0.0; });
  return static_cast<double>(std::count(ok.begin(), ok.end(), 1)) / static_cast<double>(pairs.size());
}

double validation_ppl(const TinyModel& m, std::span<const TokenPair> pairs, int threads) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> lp(pairs.size());
  parallel_for(pairs.size(), threads,
               [&](std::size_t i) { lp[i] = model::sequence_logprob(m, pairs[i].context, pairs[i].chosen); });
  double nll = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    nll -= lp[i];
    tokens += pairs[i].chosen.size();
  }
  return std::exp(nll / static_cast<double>(tokens));
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw so the order is library-independent.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

TrainReport train(TinyModel& policy, const TinyModel& reference, std::span<const TokenPair> train_pairs,
                  std::span<const TokenPair> val_pairs, const TrainSettings& settings,
                  const schedule::ScheduleParams& sched, int threads, const EpochCallback& on_epoch) {
  settings.validate();
  sched.validate();
  if (train_pairs.empty()) fail(ErrorCode::InvalidInput, "training set is empty");
  if (!reference.frozen()) fail(ErrorCode::InvalidInput, "reference model must be frozen");
  if (!policy.config().same_shape(reference.config()))
    fail(ErrorCode::InvalidInput, "policy and reference configs differ");

  const auto refs = reference_logprobs(reference, train_pairs, threads);
  TrainReport report;
  report.init_val_ppl = validation_ppl(policy, val_pairs, threads);
  report.init_margin_acc = margin_accuracy(policy, reference, val_pairs, threads);

  AdamW opt(policy, settings.backbone_lr, settings.bias_lr, settings.moment1, settings.moment2, settings.adam_eps,
            settings.weight_decay);
  Rng rng(derive_seed(settings.seed, "train"));
  const std::size_t bs = static_cast<std::size_t>(settings.batch_size);

  for (int epoch = 1; epoch <= settings.epochs; ++epoch) {
    const auto order = shuffled(train_pairs.size(), rng);
    double loss_sum = 0.0, beta_sum = 0.0, w_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      std::vector<PairGradient> pg(n);
      parallel_for(n, threads, [&](std::size_t i) {
        const std::size_t k = order[start + i];
        pg[i] = pair_gradient(policy, refs[k], train_pairs[k], settings.loss_kind, sched);
      });
      Gradients g;
      for (auto& p : pg) {
        if (!std::isfinite(p.breakdown.loss))
          fail(ErrorCode::NumericalFailure, "non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += p.breakdown.loss;
        beta_sum += p.breakdown.beta_eff;
        w_sum += p.breakdown.weight_eff;
        g.add(p.grads);
      }
      g.scale(1.0 / static_cast<double>(n));
      clip_global_norm(g, settings.clip_norm);

      std::vector<model::Matrix> last_good;
      last_good.reserve(policy.parameters().size());
      for (const auto& p : policy.parameters()) last_good.push_back(p.value);
      opt.step(policy, g);
      bool finite = true;
      for (const auto& p : policy.parameters()) finite = finite && p.value.allFinite();
      if (!finite) {
        for (std::size_t i = 0; i < last_good.size(); ++i) policy.parameters()[i].value = last_good[i];
        policy.sync_bias_from_parameters();
        fail(ErrorCode::NumericalFailure, "parameters diverged at epoch " + std::to_string(epoch));
      }
    }
    EpochStats st;
    st.epoch = epoch;
    const double count = static_cast<double>(train_pairs.size());
    st.mean_loss = loss_sum / count;
    st.mean_beta_eff = beta_sum / count;
    st.mean_w_eff = w_sum / count;
    st.margin_acc = margin_accuracy(policy, reference, val_pairs, threads);
    st.val_ppl = validation_ppl(policy, val_pairs, threads);
    report.epochs.push_back(st);
    if (on_epoch) on_epoch(policy, st);
  }
  report.steps = opt.steps();
  return report;
}

LmExample full_example(TokenSeq seq) {
  std::vector<bool> score(seq.size(), true);
  if (!score.empty()) score[0] = false;
  return {std::move(seq), std::move(score)};
}

std::vector<double> pretrain(TinyModel& m, std::span<const LmExample> seqs, const PretrainSettings& s, int threads) {
  for (const auto& ex : seqs)
    if (ex.score.size() != ex.seq.size()) fail(ErrorCode::InvalidInput, "score mask length mismatch");
  if (seqs.empty()) fail(ErrorCode::InvalidInput, "pretraining corpus is empty");
  if (s.epochs <= 0 || s.batch_size <= 0 || !(s.lr >= 0.0)) fail(ErrorCode::InvalidConfig, "bad pretrain settings");
  AdamW opt(m, s.lr, s.lr, 0.9, 0.999, 1e-8, s.weight_decay);
  Rng rng(derive_seed(s.seed, "pretrain"));
  const std::size_t bs = static_cast<std::size_t>(s.batch_size);
  std::vector<double> losses;
  for (int epoch = 0; epoch < s.epochs; ++epoch) {
    const auto order = shuffled(seqs.size(), rng);
    double nll = 0.0;
    double tokens = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      std::vector<Gradients> grads(n);
      std::vector<double> lp(n);
      std::vector<double> counts(n);
      parallel_for(n, threads, [&](std::size_t i) {
        const LmExample& ex = seqs[order[start + i]];
        ad::Tape tape;
        const model::Binding b(tape, m);
        const ad::Var total = b.token_logprob(ex.seq, ex.score);
        lp[i] = total.scalar();
        counts[i] = static_cast<double>(std::count(ex.score.begin() + 1, ex.score.end(), true));
        grads[i] = model::backward(b, ad::scale(total, -1.0));
      });
      Gradients g;
      double batch_tokens = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        g.add(grads[i]);
        nll -= lp[i];
        batch_tokens += counts[i];
      }
      tokens += batch_tokens;
      g.scale(1.0 / std::max(batch_tokens, 1.0));
      clip_global_norm(g, s.clip_norm);
      opt.step(m, g);
    }
    losses.push_back(nll / std::max(tokens, 1.0));
  }
  return losses;
}

}  // namespace inertia::align
