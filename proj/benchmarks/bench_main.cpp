#include <random>

#include <benchmark/benchmark.h>

#include "inertia/align.hpp"
#include "inertia/attn_bias.hpp"
#include "inertia/bench.hpp"
#include "inertia/sim.hpp"

using namespace inertia;

namespace {

model::TokenSeq random_seq(int n, int vocab, std::uint64_t seed, int anchors = 4) {
  std::mt19937_64 rng(seed);
  model::TokenSeq s;
  for (int i = 0; i < n; ++i)
    s.append(4 + static_cast<int>(rng() % static_cast<std::uint64_t>(vocab - 4)),
             i < anchors ? model::Role::Anchor : model::Role::Context);
  return s;
}

attn::BiasConfig bias_named(int which) {
  switch (which) {
    case 1: return attn::BiasConfig::dual_zone();
    case 2: return attn::BiasConfig::matb({{0.5, 10.0}, {1.0, 8.0}, {0.2, 12.0}, {0.0, 10.0}});
    default: return attn::BiasConfig::none();
  }
}

}  // namespace

static void BM_BiasMatrix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto cfg = attn::BiasConfig::dual_zone(0.5, 10.0, 8);
  for (auto _ : state) benchmark::DoNotOptimize(attn::bias_matrix(n, 0, cfg, 8));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_BiasMatrix)->Arg(64)->Arg(256)->Arg(1024);

static void BM_BiasedAttention(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = nd(rng);
  const auto cfg = attn::BiasConfig::dual_zone();
  for (auto _ : state) benchmark::DoNotOptimize(attn::biased_attention(s, cfg));
}
BENCHMARK(BM_BiasedAttention)->Arg(64)->Arg(256);

// Forward log-prob of a 32-token response after a context of range(0) tokens.
static void BM_Forward(benchmark::State& state) {
  model::ModelConfig cfg;
  const auto m = model::TinyModel::init(cfg, bias_named(static_cast<int>(state.range(1))));
  const auto ctx = random_seq(static_cast<int>(state.range(0)), cfg.vocab_size, 2);
  auto resp = random_seq(32, cfg.vocab_size, 3, 0);
  resp.roles.assign(resp.size(), model::Role::Response);
  for (auto _ : state) benchmark::DoNotOptimize(model::sequence_logprob(m, ctx, resp));
}
BENCHMARK(BM_Forward)->ArgsProduct({{64, 192}, {0, 1, 2}})->Unit(benchmark::kMillisecond);

// One preference-pair gradient (forward + backward through policy).
static void BM_PairGradient(benchmark::State& state) {
  model::ModelConfig cfg;
  const auto m = model::TinyModel::init(cfg, bias_named(static_cast<int>(state.range(1))));
  const auto ref = m.frozen_copy();
  align::TokenPair p;
  p.context = random_seq(static_cast<int>(state.range(0)), cfg.vocab_size, 4);
  p.chosen = random_seq(8, cfg.vocab_size, 5, 0);
  p.rejected = random_seq(8, cfg.vocab_size, 6, 0);
  p.chosen.roles.assign(8, model::Role::Response);
  p.rejected.roles.assign(8, model::Role::Response);
  p.t = 3;
  p.T = 10;
  const auto r = align::reference_logprobs(ref, p);
  for (auto _ : state)
    benchmark::DoNotOptimize(align::pair_gradient(m, r, p, align::LossKind::TdpoDkl, {}).breakdown.loss);
}
BENCHMARK(BM_PairGradient)->ArgsProduct({{64, 192}, {0, 1}})->Unit(benchmark::kMillisecond);

static void BM_InertiaTrapGen(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(bench::gen_inertia_trap(8, 200, seed++));
}
BENCHMARK(BM_InertiaTrapGen);

static void BM_SimulateDrift(benchmark::State& state) {
  sim::DriftSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(sim::simulate_drift(spec, 8.0, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_SimulateDrift)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
