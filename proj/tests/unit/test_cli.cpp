#include <sstream>

#include <json.hpp>

#include "inertia/attn_bias.hpp"
#include "inertia/cli/app.hpp"
#include "inertia/cli/config.hpp"
#include "inertia/datagen.hpp"
#include "test_util.hpp"

using namespace inertia;
using namespace inertia::cli;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args, const AppHooks& hooks = {}) {
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err, hooks);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small, fast run configuration written into `dir`.
std::string small_config(const testutil::TempDir& dir, const std::string& extra_train = "") {
  const std::string text = R"({
    "seed": 3,
    "model": {"d_model": 16, "n_heads": 2, "n_layers": 1},
    "train": {"batch_size": 4, "epochs": 1)" + extra_train + R"(},
    "data": {"n_dialogues": 6, "turns_per_dialogue": 8},
    "bench": {"n_cases": 2},
    "output_dir": ")" + dir.file("out") + R"("
  })";
  testutil::spit(dir.file("cfg.json"), text);
  return dir.file("cfg.json");
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) ++n;
  return n;
}

}  // namespace

TEST(Config, DumpParseRoundTrip) {
  RunConfig c;
  c.seed = 99;
  c.bias = attn::BiasConfig::matb({{0.5, 10.0}, {1.0, 3.0}, {0.2, 8.0}, {0.0, 1.0}});
  c.train.loss_kind = align::LossKind::Dpo;
  c.data.corpus.flips = {{4, "diet", "vegan", "meat"}};
  c.providers.judge.model = "m";
  EXPECT_EQ(parse_config(dump_config(c)), c);
  EXPECT_EQ(parse_config("{}"), RunConfig{});
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_INERTIA_ERROR(parse_config(R"({"schedule": {"beta": 0.1}})"), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(parse_config(R"({"extra": 1})"), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(parse_config(R"({"model": {"d_model": "big"}})"), ErrorCode::InvalidConfig);
  EXPECT_INERTIA_ERROR(parse_config("{not json"), ErrorCode::InvalidConfig);
}

TEST(Config, BiasForFillsMatbHeads) {
  RunConfig c;
  const auto b = bias_for(c, "matb");
  EXPECT_EQ(b.variant, attn::Variant::Matb);
  EXPECT_EQ(static_cast<int>(b.head_params.size()), c.model.n_heads);
  EXPECT_EQ(bias_for(c, "none").variant, attn::Variant::None);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({"launch-rockets"}).code, 2);
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"train"}).code, 2);  // --data is required
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(Cli, EmptyCorpusExitsTwo) {
  testutil::TempDir dir;
  testutil::spit(dir.file("cfg.json"), R"({"data": {"n_dialogues": 0}, "output_dir": ")" + dir.file("o") + "\"}");
  const auto r = invoke({"--config", dir.file("cfg.json"), "gen-data"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(Cli, GenDataIsReproducibleAndAuditBalances) {
  testutil::TempDir dir;
  const auto cfg = small_config(dir);
  ASSERT_EQ(invoke({"--config", cfg, "gen-data", "--out", dir.file("a.jsonl"), "--audit", dir.file("a.json")}).code, 0);
  ASSERT_EQ(invoke({"--config", cfg, "--threads", "2", "gen-data", "--out", dir.file("b.jsonl"), "--audit",
                    dir.file("b.json")})
                .code,
            0);
  EXPECT_EQ(testutil::slurp(dir.file("a.jsonl")), testutil::slurp(dir.file("b.jsonl")));
  EXPECT_EQ(testutil::slurp(dir.file("a.json")), testutil::slurp(dir.file("b.json")));

  const auto audit = nlohmann::json::parse(testutil::slurp(dir.file("a.json")));
  const int generated = audit.at("generated"), final_n = audit.at("final");
  const int sim_kept = audit.at("similarity").at("kept"), sim_disc = audit.at("similarity").at("discarded");
  const int len_kept = audit.at("length").at("kept"), len_disc = audit.at("length").at("discarded");
  EXPECT_EQ(sim_kept + sim_disc, generated);
  EXPECT_EQ(len_kept + len_disc, sim_kept);
  EXPECT_EQ(final_n, static_cast<int>(data::read_pairs_jsonl(dir.file("a.jsonl")).size()));
  EXPECT_EQ(invoke({"--config", cfg, "validate-dataset", "--data", dir.file("a.jsonl")}).code, 0);
}

TEST(Cli, ValidateDatasetFlagsViolations) {
  testutil::TempDir dir;
  const auto cfg = small_config(dir);
  ASSERT_EQ(invoke({"--config", cfg, "gen-data", "--out", dir.file("p.jsonl")}).code, 0);
  auto pairs = data::read_pairs_jsonl(dir.file("p.jsonl"));
  ASSERT_FALSE(pairs.empty());
  pairs[0].gap = 1;
  data::write_pairs_jsonl(pairs, dir.file("bad.jsonl"));
  const auto r = invoke({"--config", cfg, "validate-dataset", "--data", dir.file("bad.jsonl")});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(count_lines_starting(r.out, "violation:"), 1);
}

TEST(Cli, ZeroLearningRateLeavesInitialWeights) {
  testutil::TempDir dir;
  const auto cfg = small_config(dir, R"(, "backbone_lr": 0.0, "bias_lr": 0.0)");
  ASSERT_EQ(invoke({"--config", cfg, "gen-data", "--out", dir.file("p.jsonl")}).code, 0);
  const auto r = invoke({"--config", cfg, "train", "--data", dir.file("p.jsonl"), "--bias", "dual-zone", "--loss",
                         "tdpo-dkl", "--out", dir.file("policy.ckpt"), "--report", dir.file("r1.csv")});
  ASSERT_EQ(r.code, 0) << r.err;

  const RunConfig c = load_config(cfg);
  model::ModelConfig mc = c.model;
  mc.seed = c.seed;
  model::save_checkpoint(model::TinyModel::init(mc, bias_for(c, "dual-zone")), dir.file("init.ckpt"));
  EXPECT_EQ(testutil::slurp(dir.file("policy.ckpt")), testutil::slurp(dir.file("init.ckpt")));

  ASSERT_EQ(invoke({"--config", cfg, "train", "--data", dir.file("p.jsonl"), "--bias", "dual-zone", "--out",
                    dir.file("policy2.ckpt"), "--report", dir.file("r2.csv")})
                .code,
            0);
  EXPECT_EQ(testutil::slurp(dir.file("r1.csv")), testutil::slurp(dir.file("r2.csv")));
}

TEST(Cli, TrainRunsAreReproducibleAcrossThreads) {
  testutil::TempDir dir;
  const auto cfg = small_config(dir, R"(, "backbone_lr": 1e-3)");
  ASSERT_EQ(invoke({"--config", cfg, "gen-data", "--out", dir.file("p.jsonl")}).code, 0);
  for (const char* n : {"1", "3"})
    ASSERT_EQ(invoke({"--config", cfg, "--threads", n, "train", "--data", dir.file("p.jsonl"), "--out",
                      dir.file(std::string("c") + n), "--report", dir.file(std::string("r") + n)})
                  .code,
              0);
  EXPECT_EQ(testutil::slurp(dir.file("c1")), testutil::slurp(dir.file("c3")));
  EXPECT_EQ(testutil::slurp(dir.file("r1")), testutil::slurp(dir.file("r3")));
}

TEST(Cli, GradCheckPassesAndCatchesTamperedBackward) {
  for (const char* bias : {"none", "dual-zone", "matb"}) {
    const auto ok = invoke({"grad-check", "--bias", bias, "--loss", "tdpo-dkl"});
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_NE(ok.out.find("PASS worst"), std::string::npos);
  }
  AppHooks hooks;
  hooks.tamper_gradients = [](model::Gradients& g) {
    for (auto& v : g.values) v *= 1.01;
  };
  const auto bad = invoke({"grad-check", "--bias", "dual-zone"}, hooks);
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("FAIL worst"), std::string::npos);
  for (const char* t : {"tok_emb ", "pos_emb ", "layers.0.attn.wq ", "layers.0.mlp.b2 ", "head.w ", "bias.lambda "})
    EXPECT_EQ(count_lines_starting(bad.out, t), 1) << t;
  EXPECT_EQ(count_lines_starting(bad.out, "tok_emb ") + count_lines_starting(bad.out, "head.b "), 2);
  EXPECT_EQ(invoke({"grad-check", "--d-model", "64"}).code, 2);  // over the parameter cap
}

TEST(Cli, BenchInertiaWritesCsv) {
  testutil::TempDir dir;
  const auto cfg = small_config(dir);
  const auto r = invoke({"--config", cfg, "bench", "--suite", "inertia", "--bias", "dual-zone", "--out",
                         dir.file("b.csv"), "--transcripts", dir.file("t.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = testutil::slurp(dir.file("b.csv"));
  EXPECT_EQ(csv.rfind("kind,n,accuracy\ninertia_trap,2,", 0), 0u) << csv;
  EXPECT_EQ(count_lines_starting(testutil::slurp(dir.file("t.jsonl")), "{\"id\""), 2);
}

TEST(Cli, ExportBiasCurveMatchesKernel) {
  testutil::TempDir dir;
  const auto r = invoke({"export-bias-curve", "--lambda", "0.5,1.25", "--tau-fixed", "10", "--max-delta", "40",
                         "--out", dir.file("c.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(testutil::slurp(dir.file("c.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "delta,bias_lambda_0.5,bias_lambda_1.25");
  int rows = 0;
  while (std::getline(in, line)) {
    int d;
    double a, b;
    char c1, c2;
    std::istringstream row(line);
    row >> d >> c1 >> a >> c2 >> b;
    EXPECT_EQ(d, rows);
    EXPECT_DOUBLE_EQ(a, attn::dual_zone_bias(d, 0, 0.5, 10.0, 0));
    EXPECT_DOUBLE_EQ(b, attn::dual_zone_bias(d, 0, 1.25, 10.0, 0));
    ++rows;
  }
  EXPECT_EQ(rows, 41);
  EXPECT_EQ(invoke({"export-bias-curve", "--lambda", "-1", "--out", dir.file("x.csv")}).code, 2);
}

TEST(Cli, RegretSimReportsSlope) {
  testutil::TempDir dir;
  const auto r = invoke({"regret-sim", "--delta-grid", "0.01,0.02,0.04,0.08", "--tau-grid",
                         "1,1.5,2,3,4,6,8,12,16,24,32", "--trials", "100", "--out", dir.file("s.csv"),
                         "--proxy-table", dir.file("p.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("slope"), std::string::npos);
  EXPECT_NE(testutil::slurp(dir.file("s.csv")).find("delta,tau_star"), std::string::npos);
  EXPECT_FALSE(testutil::slurp(dir.file("p.csv")).empty());
}

TEST(Cli, JudgeEvalNeedsKey) {
  testutil::TempDir dir;
  ::unsetenv("JUDGE_API_KEY");
  testutil::spit(dir.file("cfg.json"),
                 R"({"providers": {"judge": {"endpoint": "http://127.0.0.1:1/v1/chat/completions", "model": "m"}}})");
  testutil::spit(dir.file("items.jsonl"), R"({"question": "q", "answer_a": "a", "answer_b": "b"})"
                                          "\n");
  EXPECT_EQ(invoke({"--config", dir.file("cfg.json"), "--output-dir", dir.file("o"), "judge-eval", "--items",
                    dir.file("items.jsonl")})
                .code,
            2);
}

TEST(Cli, DumpConfigReflectsOverrides) {
  const auto r = invoke({"--seed", "17", "dump-config"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(parse_config(r.out).seed, 17u);
}
