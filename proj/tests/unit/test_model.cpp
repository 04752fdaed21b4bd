#include <cmath>
#include <cstring>
#include <random>

#include "inertia/model.hpp"
#include "test_util.hpp"

using namespace inertia;
using namespace inertia::model;

namespace {

ModelConfig tiny_config(int vocab = 5, int layers = 1, std::uint64_t seed = 3) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = layers;
  c.max_seq = 16;
  c.seed = seed;
  return c;
}

// --- straight-line oracle -------------------------------------------------
// Plain nested loops over std::vector, written independently of the tape.

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Mat to_mat(const Matrix& m) {
  Mat out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

Vec vec_times_mat(const Vec& x, const Mat& w) {
  Vec y(w[0].size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += x[i] * w[i][j];
  return y;
}

Vec norm_row(const Vec& x, const Vec& g, const Vec& b) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * g[i] + b[i];
  return y;
}

// Returns log-prob rows. Dual-zone bias applied when lambda > 0.
Mat oracle_logprobs(const TinyModel& m, const std::vector<int>& ids, double lambda = 0.0, double tau = 10.0,
                    int anchor = 0) {
  const auto& cfg = m.config();
  auto P = [&](const std::string& n) { return to_mat(m.parameter(n).value); };
  const std::size_t n = ids.size(), d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads), dh = d / H;
  const Mat tok = P("tok_emb"), pos = P("pos_emb");
  Mat x(n, Vec(d));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t c = 0; c < d; ++c) x[p][c] = tok[static_cast<std::size_t>(ids[p])][c] + pos[p][c];

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    const Mat wq = P(pre + "attn.wq"), wk = P(pre + "attn.wk"), wv = P(pre + "attn.wv"), wo = P(pre + "attn.wo");
    const Vec g1 = P(pre + "ln1.gain")[0], b1 = P(pre + "ln1.bias")[0];
    const Vec g2 = P(pre + "ln2.gain")[0], b2 = P(pre + "ln2.bias")[0];
    const Mat w1 = P(pre + "mlp.w1"), w2 = P(pre + "mlp.w2");
    const Vec c1 = P(pre + "mlp.b1")[0], c2 = P(pre + "mlp.b2")[0];

    Mat q(n), k(n), v(n);
    for (std::size_t p = 0; p < n; ++p) {
      const Vec h = norm_row(x[p], g1, b1);
      q[p] = vec_times_mat(h, wq);
      k[p] = vec_times_mat(h, wk);
      v[p] = vec_times_mat(h, wv);
    }
    Mat att(n, Vec(d, 0.0));
    for (std::size_t head = 0; head < H; ++head) {
      for (std::size_t i = 0; i < n; ++i) {
        Vec s(i + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) dot += q[i][c] * k[j][c];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          if (lambda > 0.0 && static_cast<int>(j) >= anchor) s[j] -= lambda * static_cast<double>(i - j) / tau;
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) att[i][c] += s[j] / z * v[j][c];
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      const Vec o = vec_times_mat(att[p], wo);
      for (std::size_t c = 0; c < d; ++c) x[p][c] += o[c];
      Vec f = vec_times_mat(norm_row(x[p], g2, b2), w1);
      for (std::size_t c = 0; c < f.size(); ++c) {
        const double u = f[c] + c1[c];
        f[c] = u / (1.0 + std::exp(-u));
      }
      const Vec y = vec_times_mat(f, w2);
      for (std::size_t c = 0; c < d; ++c) x[p][c] += y[c] + c2[c];
    }
  }
  const Vec gf = P("ln_f.gain")[0], bf = P("ln_f.bias")[0], hb = P("head.b")[0];
  const Mat hw = P("head.w");
  Mat out(n);
  for (std::size_t p = 0; p < n; ++p) {
    Vec lg = vec_times_mat(norm_row(x[p], gf, bf), hw);
    double mx = -1e300;
    for (std::size_t t = 0; t < lg.size(); ++t) mx = std::max(mx, lg[t] += hb[t]);
    double z = 0.0;
    for (double e : lg) z += std::exp(e - mx);
    for (double& e : lg) e -= mx + std::log(z);
    out[p] = lg;
  }
  return out;
}

TokenSeq ctx(std::vector<int> ids) { return TokenSeq::of(std::move(ids), Role::Context); }
TokenSeq resp(std::vector<int> ids) { return TokenSeq::of(std::move(ids), Role::Response); }

}  // namespace

TEST(Model, ForwardMatchesLoopOracle) {
  const auto m = TinyModel::init(tiny_config());
  const std::vector<int> ids = {0, 3, 1, 4, 4, 2, 0};
  const Matrix lp = forward_logprobs(m, ctx(ids));
  const Mat oracle = oracle_logprobs(m, ids);
  for (std::size_t p = 0; p < ids.size(); ++p)
    for (std::size_t t = 0; t < 5; ++t)
      EXPECT_NEAR(lp(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t)), oracle[p][t], 1e-6);
}

TEST(Model, TwoLayerForwardWithDualZoneMatchesOracle) {
  auto m = TinyModel::init(tiny_config(7, 2, 11), attn::BiasConfig::dual_zone(0.5, 10.0, 0));
  std::vector<int> ids = {1, 2, 3, 4, 5, 6, 0, 1, 2};
  TokenSeq seq = ctx(ids);
  seq.roles[0] = seq.roles[1] = Role::Anchor;
  const Matrix lp = forward_logprobs(m, seq);
  const Mat oracle = oracle_logprobs(m, ids, 0.5, 10.0, 2);
  for (std::size_t p = 0; p < ids.size(); ++p)
    for (std::size_t t = 0; t < 7; ++t)
      EXPECT_NEAR(lp(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t)), oracle[p][t], 1e-9);
}

TEST(Model, NoneVariantMatchesBiasFreeOracleClosely) {
  const auto m = TinyModel::init(tiny_config(6, 2, 5));
  const std::vector<int> ids = {5, 1, 0, 3, 2, 2, 4, 1, 0, 5, 3};
  const Matrix lp = forward_logprobs(m, ctx(ids));
  const Mat oracle = oracle_logprobs(m, ids);
  for (std::size_t p = 0; p < ids.size(); ++p)
    for (std::size_t t = 0; t < 6; ++t)
      ASSERT_NEAR(lp(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t)), oracle[p][t], 1e-9);
}

TEST(Model, RowsAreNormalized) {
  const auto m = TinyModel::init(tiny_config(11, 2, 1), attn::BiasConfig::dual_zone());
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ids(1 + rng() % 16);
    for (auto& id : ids) id = static_cast<int>(rng() % 11);
    const Matrix lp = forward_logprobs(m, ctx(ids));
    for (Eigen::Index r = 0; r < lp.rows(); ++r) {
      ASSERT_NEAR(lp.row(r).array().exp().sum(), 1.0, 1e-6);
      const double mx = lp.row(r).maxCoeff();
      ASSERT_LT(std::abs(mx + std::log((lp.row(r).array() - mx).exp().sum())), 1e-5);
    }
  }
}

TEST(Model, ZeroedHeadGivesUniformLogprobs) {
  auto m = TinyModel::init(tiny_config(9));
  m.parameter("head.w").value.setZero();
  m.parameter("head.b").value.setZero();
  const Matrix lp = forward_logprobs(m, ctx({1, 2, 3, 4}));
  EXPECT_TRUE(lp.isApprox(Matrix::Constant(4, 9, -std::log(9.0)), 1e-14));
  EXPECT_NEAR(sequence_logprob(m, ctx({1, 2}), resp({3, 4, 5})), -3.0 * std::log(9.0), 1e-12);
}

TEST(Model, SequenceLogprobChainRule) {
  const auto m = TinyModel::init(tiny_config());
  const TokenSeq c = ctx({0, 1, 2}), r = resp({4, 3, 1});
  const Matrix lp = forward_logprobs(m, concat(c, r));
  const double chain = lp(2, 4) + lp(3, 3) + lp(4, 1);
  EXPECT_NEAR(sequence_logprob(m, c, r), chain, 1e-12);
  EXPECT_NEAR(sequence_logprob(m, c, resp({4})), lp(2, 4), 1e-12);
}

TEST(Model, InputErrors) {
  const auto m = TinyModel::init(tiny_config());
  EXPECT_INERTIA_ERROR(forward_logprobs(m, ctx(std::vector<int>(17, 1))), ErrorCode::InvalidInput);
  EXPECT_INERTIA_ERROR(forward_logprobs(m, ctx({0, 5})), ErrorCode::InvalidInput);
  EXPECT_INERTIA_ERROR(forward_logprobs(m, ctx({0, -1})), ErrorCode::InvalidInput);
  EXPECT_INERTIA_ERROR(sequence_logprob(m, ctx({0}), resp({})), ErrorCode::InvalidInput);
  TokenSeq bad = ctx({1, 2, 3});
  bad.roles[2] = Role::Anchor;
  EXPECT_INERTIA_ERROR(forward_logprobs(m, bad), ErrorCode::InvalidInput);
}

TEST(Model, ConfigValidation) {
  ModelConfig c = tiny_config();
  c.d_model = 9;
  EXPECT_INERTIA_ERROR(c.validate(), ErrorCode::InvalidConfig);
  c = tiny_config();
  c.max_seq = 1;
  EXPECT_INERTIA_ERROR(c.validate(), ErrorCode::InvalidConfig);
}

TEST(LogRatio, IdentityAntisymmetryAndFiniteDifference) {
  const auto policy = TinyModel::init(tiny_config(5, 1, 1));
  const auto ref = policy.frozen_copy();
  const TokenSeq c = ctx({0, 1, 2}), r = resp({3, 4});
  EXPECT_NEAR(log_ratio(policy, ref, c, r), 0.0, 1e-9);

  const auto other = TinyModel::init(tiny_config(5, 1, 2));
  EXPECT_DOUBLE_EQ(log_ratio(policy, other, c, r), -log_ratio(other, policy, c, r));

  // d/dW of sum_p log softmax(h_p W + b)[y_p] for one head weight W[a][y].
  const int a = 2, y = 3;
  ad::Tape tape;
  const Binding b(tape, policy);
  const Gradients g = backward(b, b.sequence_logprob(c, r));
  const double predicted = g.get("head.w")(a, y);
  const double delta = 1e-5;
  auto bumped = policy;
  bumped.parameter("head.w").value(a, y) += delta;
  const double change = log_ratio(bumped, ref, c, r);
  EXPECT_NEAR(change / delta, predicted, 1e-4 * std::max(1.0, std::abs(predicted)));

  ModelConfig wide = tiny_config();
  wide.d_model = 16;
  EXPECT_INERTIA_ERROR(log_ratio(policy, TinyModel::init(wide), c, r), ErrorCode::InvalidInput);
}

TEST(Backward, ZeroLossAndSquareSum) {
  const auto m = TinyModel::init(tiny_config());
  {
    ad::Tape tape;
    const Binding b(tape, m);
    const Gradients g = backward(b, ad::scale(b.sequence_logprob(ctx({1, 2}), resp({3})), 0.0));
    EXPECT_EQ(g.values.size(), m.parameters().size());
    EXPECT_EQ(g.norm(), 0.0);
  }
  {
    ad::Tape tape;
    const Binding b(tape, m);
    const Gradients g = backward(b, ad::square_sum(b.param("layers.0.attn.wq")));
    EXPECT_TRUE(g.get("layers.0.attn.wq").isApprox(2.0 * m.parameter("layers.0.attn.wq").value, 1e-15));
    EXPECT_TRUE(g.get("tok_emb").isZero(0.0));
  }
}

TEST(Backward, FrozenReferenceGetsNoGradients) {
  const auto ref = TinyModel::init(tiny_config()).frozen_copy();
  ad::Tape tape;
  const Binding b(tape, ref);
  EXPECT_FALSE(b.trainable());
  const Gradients g = backward(b, b.sequence_logprob(ctx({1, 2}), resp({3})));
  EXPECT_TRUE(g.empty());
}

TEST(Backward, NanLossRejected) {
  auto m = TinyModel::init(tiny_config());
  m.parameter("head.b").value(0, 1) = std::nan("");
  ad::Tape tape;
  const Binding b(tape, m);
  EXPECT_INERTIA_ERROR(backward(b, b.sequence_logprob(ctx({1, 2}), resp({1}))), ErrorCode::NumericalFailure);
}

TEST(Model, DeterministicInitAndForward) {
  const auto a = TinyModel::init(tiny_config(5, 2, 77), attn::BiasConfig::dual_zone());
  const auto b = TinyModel::init(tiny_config(5, 2, 77), attn::BiasConfig::dual_zone());
  EXPECT_EQ(a.parameter_hash(), b.parameter_hash());
  const Matrix x = forward_logprobs(a, ctx({0, 1, 2, 3, 4, 0}));
  const Matrix y = forward_logprobs(b, ctx({0, 1, 2, 3, 4, 0}));
  EXPECT_EQ(0, std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())));
  EXPECT_NE(a.parameter_hash(), TinyModel::init(tiny_config(5, 2, 78)).parameter_hash());
}

TEST(Model, LearnableBiasAddsParameter) {
  auto bias = attn::BiasConfig::dual_zone(0.5, 10.0);
  bias.learnable = true;
  auto m = TinyModel::init(tiny_config(), bias);
  EXPECT_EQ(m.parameter("bias.lambda").group, ParamGroup::Bias);
  m.parameter("bias.lambda").value(0, 0) = 0.9;
  m.sync_bias_from_parameters();
  EXPECT_DOUBLE_EQ(m.bias().lambda, 0.9);
  m.set_bias(attn::BiasConfig::none());
  EXPECT_INERTIA_ERROR(m.parameter("bias.lambda"), ErrorCode::InvalidInput);
}

TEST(Model, GreedyDecodeMatchesArgmaxAndFlagsOverflow) {
  const auto m = TinyModel::init(tiny_config());
  const TokenSeq prompt = ctx({0, 1, 2});
  const auto r = greedy_decode(m, prompt, 3);
  ASSERT_EQ(r.tokens.size(), 3u);
  TokenSeq seq = prompt;
  for (int t : r.tokens) {
    const Matrix lp = forward_logprobs(m, seq);
    Eigen::Index best;
    lp.row(lp.rows() - 1).maxCoeff(&best);
    EXPECT_EQ(t, best);
    seq.append(t, Role::Response);
  }
  const auto over = greedy_decode(m, ctx(std::vector<int>(15, 1)), 5);
  EXPECT_TRUE(over.overflow);
  EXPECT_EQ(over.tokens.size(), 1u);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  testutil::TempDir dir;
  auto bias = attn::BiasConfig::matb({{0.5, 10.0}, {0.3, 4.0}});
  bias.learnable = true;
  const auto m = TinyModel::init(tiny_config(5, 2, 9), bias);
  save_checkpoint(m, dir.file("m.ckpt"));
  const auto back = load_checkpoint(dir.file("m.ckpt"));
  EXPECT_EQ(back.parameter_hash(), m.parameter_hash());
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.bias(), m.bias());
  EXPECT_EQ(testutil::slurp(dir.file("m.ckpt")).rfind(std::string(kCheckpointMagic), 0), 0u);
}

TEST(Checkpoint, RejectsForeignFiles) {
  testutil::TempDir dir;
  testutil::spit(dir.file("x.ckpt"), "NOT-A-CHECKPOINT\n{}\n");
  EXPECT_INERTIA_ERROR(load_checkpoint(dir.file("x.ckpt")), ErrorCode::InvalidInput);
  EXPECT_INERTIA_ERROR(load_checkpoint(dir.file("missing.ckpt")), ErrorCode::InvalidInput);
  const auto m = TinyModel::init(tiny_config());
  save_checkpoint(m, dir.file("t.ckpt"));
  std::string bytes = testutil::slurp(dir.file("t.ckpt"));
  bytes.resize(bytes.size() - 16);
  testutil::spit(dir.file("t.ckpt"), bytes);
  EXPECT_INERTIA_ERROR(load_checkpoint(dir.file("t.ckpt")), ErrorCode::InvalidInput);
}
