#include <cmath>
#include <random>

#include "inertia/attn_bias.hpp"
#include "test_util.hpp"

using namespace inertia;
using namespace inertia::attn;

TEST(DualZone, Examples) {
  const auto cfg = BiasConfig::dual_zone(0.5, 10.0, 16);
  EXPECT_EQ(dual_zone_bias(20, 3, cfg), 0.0);
  EXPECT_EQ(dual_zone_bias(20, 20, cfg), 0.0);
  EXPECT_EQ(dual_zone_bias(10, 0, 0.5, 10.0, 0), -0.5);
}

TEST(DualZone, AnchorZoneExactlyZero) {
  const auto cfg = BiasConfig::dual_zone(3.7, 0.3, 24);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j <= std::min(i, 23); ++j) {
      const double b = dual_zone_bias(i, j, cfg);
      ASSERT_EQ(b, 0.0);
      ASSERT_FALSE(std::signbit(b));
    }
}

TEST(DualZone, StateZoneIsLinearInDistance) {
  for (int d = 0; d <= 128; ++d) ASSERT_DOUBLE_EQ(dual_zone_bias(200, 200 - d, 0.68, 10.0, 0), -0.68 * d / 10.0);
}

TEST(DualZone, FutureKeyRejected) {
  EXPECT_INERTIA_ERROR(dual_zone_bias(3, 4, BiasConfig::dual_zone()), ErrorCode::InvalidInput);
}

TEST(Matb, Examples) {
  const auto cfg = BiasConfig::matb({{0.5, 10.0}, {0.0, 3.0}});
  EXPECT_EQ(matb_bias(5, 5, 0, cfg), 0.0);
  EXPECT_EQ(matb_bias(4, 5, 0, cfg), 0.0);
  EXPECT_EQ(matb_bias(40, 20, 0, cfg), -1.0);
  for (int d = 0; d < 50; ++d) ASSERT_EQ(matb_bias(60, 60 - d, 1, cfg), 0.0);
}

TEST(Matb, MissingHeadsRejected) {
  BiasConfig cfg;
  cfg.variant = Variant::Matb;
  EXPECT_INERTIA_ERROR(matb_bias(2, 1, 0, cfg), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(cfg.validate(2, 16), ErrorCode::InvalidConfig);
}

TEST(BiasConfig, Validation) {
  EXPECT_NO_THROW(BiasConfig::dual_zone(0.5, 10, 4).validate(4, 16));
  EXPECT_INERTIA_ERROR(BiasConfig::dual_zone(0.5, 10, 16).validate(4, 16), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(BiasConfig::dual_zone(-0.1, 10, 0).validate(4, 16), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(BiasConfig::dual_zone(0.5, 0.0, 0).validate(4, 16), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(parse_variant("alibi"), ErrorCode::InvalidConfig);
  for (auto v : {Variant::None, Variant::DualZone, Variant::Matb}) EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(Radius, Examples) {
  const double inv_e = std::exp(-1.0);
  EXPECT_NEAR(effective_radius(BiasConfig::dual_zone(0.5, 10.0), inv_e).value, 20.0, 1e-12);
  EXPECT_NEAR(effective_radius(BiasConfig::dual_zone(1.0, 10.0), inv_e).value, 10.0, 1e-12);
  EXPECT_NEAR(effective_radius(BiasConfig::dual_zone(0.5, 10.0), 1.0 - 1e-15).value, 0.0, 1e-12);
  const auto inf = effective_radius(BiasConfig::dual_zone(0.0, 10.0), 0.1);
  EXPECT_TRUE(inf.infinite);
  EXPECT_INERTIA_ERROR(effective_radius(BiasConfig::dual_zone(), 0.0), ErrorCode::InvalidInput);
  EXPECT_INERTIA_ERROR(effective_radius(BiasConfig::dual_zone(), 1.0), ErrorCode::InvalidInput);
}

TEST(Radius, AttenuationAtRadiusEqualsEpsilon) {
  const auto cfg = BiasConfig::dual_zone(0.68, 10.0);
  for (double eps : {0.5, 0.1, 0.01}) {
    const double r = effective_radius(cfg, eps).value;
    EXPECT_NEAR(std::exp(-cfg.lambda * r / cfg.tau_fixed), eps, 1e-12);
  }
}

TEST(BiasedAttention, UniformScoresGiveUniformRows) {
  const int n = 7;
  const auto w = biased_attention(Eigen::MatrixXd::Zero(n, n), BiasConfig::none());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) EXPECT_NEAR(w(i, j), j <= i ? 1.0 / (i + 1) : 0.0, 1e-15);
}

TEST(BiasedAttention, RowStochasticOnRandomScores) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 3.0);
  const std::vector<BiasConfig> cfgs = {BiasConfig::none(), BiasConfig::dual_zone(0.5, 10.0, 3),
                                        BiasConfig::matb({{0.5, 10.0}, {2.0, 1.0}})};
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 24);
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s(i, j) = nd(rng);
    const auto& cfg = cfgs[static_cast<std::size_t>(trial) % cfgs.size()];
    const auto w = biased_attention(s, cfg, trial % 2, std::min(cfg.anchor_len, n - 1));
    for (int i = 0; i < n; ++i) {
      ASSERT_NEAR(w.row(i).sum(), 1.0, 1e-6);
      for (int j = i + 1; j < n; ++j) ASSERT_EQ(w(i, j), 0.0);
    }
  }
}

TEST(BiasedAttention, AnchorLogitsEqualRawScores) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  const int n = 30, anchor = 6;
  Eigen::MatrixXd s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = nd(rng);
  const auto lg = biased_logits(s, 0, BiasConfig::dual_zone(0.9, 4.0), anchor);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < std::min(anchor, i + 1); ++j) ASSERT_EQ(lg(i, j), s(i, j));
  EXPECT_TRUE(std::isinf(lg(0, 1)));
}

TEST(BiasedAttention, FloodingLeavesAnchorLogitsUnchanged) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  const int clean = 12, flooded = 48, anchor = 4;
  Eigen::MatrixXd big(flooded, flooded);
  for (int i = 0; i < flooded; ++i)
    for (int j = 0; j < flooded; ++j) big(i, j) = nd(rng);
  const auto cfg = BiasConfig::dual_zone();
  const auto a = biased_logits(big.topLeftCorner(clean, clean), 0, cfg, anchor);
  const auto b = biased_logits(big, 0, cfg, anchor);
  for (int i = 0; i < clean; ++i)
    for (int j = 0; j < anchor && j <= i; ++j) ASSERT_EQ(a(i, j), b(i, j));
  // The final query row of the flooded run sees its anchor keys unbiased too.
  for (int j = 0; j < anchor; ++j) ASSERT_EQ(b(flooded - 1, j), big(flooded - 1, j));
}

TEST(BiasedAttention, NonFiniteScoresRejected) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
  s(2, 1) = std::nan("");
  EXPECT_INERTIA_ERROR(biased_attention(s, BiasConfig::none()), ErrorCode::InvalidInput);
  s(2, 1) = std::numeric_limits<double>::infinity();
  EXPECT_INERTIA_ERROR(biased_attention(s, BiasConfig::dual_zone()), ErrorCode::InvalidInput);
}

TEST(BiasedAttention, DecayRatioLaw) {
  for (double lambda : {0.5, 0.68, 1.3}) {
    const auto cfg = BiasConfig::dual_zone(lambda, 10.0);
    const int n = 65;
    const auto w = biased_attention(Eigen::MatrixXd::Zero(n, n), cfg);
    const int i = n - 1;
    for (int d1 = 0; d1 <= 64; ++d1)
      for (int d2 = d1; d2 <= 64; ++d2) {
        const double ratio = w(i, i - d1) / w(i, i - d2);
        const double law = std::exp(lambda * (d2 - d1) / 10.0);
        ASSERT_NEAR(ratio / law, 1.0, 1e-6) << "d1=" << d1 << " d2=" << d2;
      }
  }
}

TEST(BiasedAttention, MonotoneSuppressionInStateZone) {
  for (int n = 1; n <= 64; ++n) {
    const auto w = biased_attention(Eigen::MatrixXd::Zero(n, n), BiasConfig::dual_zone(0.5, 10.0));
    for (int i = 0; i < n; ++i)
      for (int j = 1; j <= i; ++j) ASSERT_LE(w(i, j - 1), w(i, j));  // j - 1 is one step further away
  }
}

TEST(MassSplit, DualZoneShiftsMassToRecentWindow) {
  const int n = 40, k = 5;
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(n, n);
  const auto base = attention_mass_split(biased_attention(zeros, BiasConfig::none()), n - 1, k);
  const auto dz = attention_mass_split(biased_attention(zeros, BiasConfig::dual_zone()), n - 1, k);
  EXPECT_NEAR(base.recent, static_cast<double>(k) / n, 1e-12);
  EXPECT_NEAR(base.recent + base.history, 1.0, 1e-12);
  EXPECT_NEAR(dz.recent + dz.history, 1.0, 1e-12);
  EXPECT_GT(dz.recent, base.recent);
  EXPECT_INERTIA_ERROR(attention_mass_split(zeros, n - 1, 0), ErrorCode::InvalidInput);
}
