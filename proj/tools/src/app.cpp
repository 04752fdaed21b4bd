#include "inertia/cli/app.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "inertia/align.hpp"
#include "inertia/attn_bias.hpp"
#include "inertia/bench.hpp"
#include "inertia/cli/config.hpp"
#include "inertia/datagen.hpp"
#include "inertia/error.hpp"
#include "inertia/gradcheck.hpp"
#include "inertia/judge.hpp"
#include "inertia/parallel.hpp"
#include "inertia/rng.hpp"
#include "inertia/sim.hpp"

namespace inertia::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr std::size_t kGradCheckMaxParams = 5000;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  int threads = hardware_threads();
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.output_dir) cfg.output_dir = *g.output_dir;
  cfg.validate();
  return cfg;
}

std::string in_output_dir(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / name).string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidInput, "cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidInput, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

model::ModelConfig model_config(const RunConfig& cfg) {
  model::ModelConfig m = cfg.model;
  m.seed = cfg.seed;
  return m;
}

data::CorpusSpec corpus_spec(const RunConfig& cfg) {
  data::CorpusSpec c = cfg.data.corpus;
  c.seed = cfg.seed;
  return c;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const RunConfig& cfg, const std::string& out_path, const std::string& audit_path, int threads,
                 std::ostream& out) {
  const auto provider = embed::make_provider(cfg.providers.embedding);
  const data::PipelineResult r = data::run_pipeline(corpus_spec(cfg), *provider, cfg.data.filters, threads);
  const auto violations = data::validate_pairs(r.pairs, cfg.data.filters);
  if (!violations.empty()) fail(ErrorCode::InvalidInput, "generated pairs violate invariants: " + violations.front());
  ensure_parent(out_path);
  data::write_pairs_jsonl(r.pairs, out_path);
  write_text(audit_path, r.audit.to_json() + "\n");
  out << "pairs: " << r.pairs.size() << " -> " << out_path << "\n"
      << "audit: " << audit_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- pretrain

int cmd_pretrain(const RunConfig& cfg, const std::string& bias, const std::string& out_path, int threads,
                 std::ostream& out) {
  model::TinyModel m = model::TinyModel::init(model_config(cfg), bias_for(cfg, bias));
  data::CorpusSpec spec = corpus_spec(cfg);
  spec.n_dialogues = cfg.warmup.dialogues;
  spec.seed = derive_seed(cfg.seed, "warmup");
  const auto examples = data::warmup_examples(spec, data::Vocabulary::standard());
  align::PretrainSettings ps = cfg.warmup.settings;
  ps.seed = cfg.seed;
  const auto losses = align::pretrain(m, examples, ps, threads);
  ensure_parent(out_path);
  model::save_checkpoint(m, out_path);
  for (std::size_t e = 0; e < losses.size(); ++e) out << "epoch " << e + 1 << " nll " << losses[e] << "\n";
  out << "checkpoint: " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const RunConfig& cfg, const std::string& data_path, const std::string& loss, const std::string& bias,
              const std::string& init_path, const std::string& ckpt_path, const std::string& report_path,
              double val_fraction, int threads, std::ostream& out, std::ostream& err) {
  const auto pairs = data::read_pairs_jsonl(data_path);
  const auto violations = data::validate_pairs(pairs, cfg.data.filters);
  if (!violations.empty()) fail(ErrorCode::InvalidInput, data_path + ": " + violations.front());
  if (pairs.size() < 2) fail(ErrorCode::InvalidInput, data_path + ": need at least two pairs");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail(ErrorCode::InvalidConfig, "--val-fraction must lie in (0, 1)");

  const auto token_pairs = data::to_token_pairs(pairs, data::Vocabulary::standard());
  // Held-out pairs come from the tail, i.e. the last dialogues generated.
  const std::size_t n_val =
      std::max<std::size_t>(1, static_cast<std::size_t>(val_fraction * static_cast<double>(token_pairs.size())));
  const std::span<const align::TokenPair> all(token_pairs);
  const auto train_pairs = all.first(all.size() - n_val);
  const auto val_pairs = all.last(n_val);

  model::TinyModel policy = init_path.empty() ? model::TinyModel::init(model_config(cfg), bias_for(cfg, bias))
                                              : model::load_checkpoint(init_path);
  if (!init_path.empty()) policy.set_bias(bias_for(cfg, bias));
  const model::TinyModel reference = policy.frozen_copy();

  align::TrainSettings ts = cfg.train;
  ts.loss_kind = align::parse_loss_kind(loss);
  ts.seed = cfg.seed;
  ensure_parent(ckpt_path);
  ensure_parent(report_path);

  align::TrainReport report;
  try {
    report = align::train(policy, reference, train_pairs, val_pairs, ts, cfg.schedule, threads,
                          [&](const model::TinyModel& m, const align::EpochStats& s) {
                            model::save_checkpoint(m, ckpt_path);  // last good state on disk
                            err << "epoch " << s.epoch << " loss " << s.mean_loss << " margin_acc " << s.margin_acc
                                << " val_ppl " << s.val_ppl << "\n";
                          });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NumericalFailure) {
      if (!fs::exists(ckpt_path)) model::save_checkpoint(policy, ckpt_path);
      err << "numerical failure; last good checkpoint kept at " << ckpt_path << "\n";
    }
    throw;
  }
  model::save_checkpoint(policy, ckpt_path);
  align::write_report_csv(report, report_path);
  out << "checkpoint: " << ckpt_path << "\nreport: " << report_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- grad-check

struct GradCheckOptions {
  int vocab = 16;
  int d_model = 8;
  int n_heads = 2;
  int n_layers = 1;
  int max_seq = 24;
  int n_pairs = 3;
  double h = 1e-4;
  double tol = 1e-3;
};

std::vector<align::TokenPair> random_pairs(int n, int vocab, Rng& rng) {
  auto tok = [&] { return 4 + static_cast<int>(rng() % static_cast<std::uint64_t>(vocab - 4)); };
  std::vector<align::TokenPair> pairs;
  for (int i = 0; i < n; ++i) {
    align::TokenPair p;
    for (int k = 0; k < 2; ++k) p.context.append(tok(), model::Role::Anchor);
    for (int k = 0; k < 6; ++k) p.context.append(tok(), model::Role::Context);
    for (int k = 0; k < 3; ++k) p.chosen.append(tok(), model::Role::Response);
    for (int k = 0; k < 4; ++k) p.rejected.append(tok(), model::Role::Response);
    p.T = 10;
    p.t = 1 + static_cast<int>(rng() % 10);
    p.conflict = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

int cmd_grad_check(const RunConfig& cfg, const GradCheckOptions& o, const std::string& loss, const std::string& bias,
                   const AppHooks& hooks, std::ostream& out) {
  model::ModelConfig mc;
  mc.vocab_size = o.vocab;
  mc.d_model = o.d_model;
  mc.n_heads = o.n_heads;
  mc.n_layers = o.n_layers;
  mc.max_seq = o.max_seq;
  mc.seed = cfg.seed;
  mc.validate();
  if (o.vocab <= 4) fail(ErrorCode::InvalidConfig, "grad-check vocab must exceed the 4 special tokens");
  // The probe model has its own head count, so matb heads follow it.
  RunConfig probe_cfg = cfg;
  probe_cfg.model = mc;
  attn::BiasConfig bc = bias_for(probe_cfg, bias);
  bc.learnable = bc.variant != attn::Variant::None;
  bc.validate(mc.n_heads, mc.max_seq);
  model::TinyModel policy = model::TinyModel::init(mc, bc);
  if (policy.parameter_count() > kGradCheckMaxParams)
    fail(ErrorCode::InvalidConfig, "grad-check model has " + std::to_string(policy.parameter_count()) +
                                       " parameters; at most " + std::to_string(kGradCheckMaxParams) + " allowed");
  model::ModelConfig ref_cfg = mc;
  ref_cfg.seed = derive_seed(cfg.seed, "reference");
  const model::TinyModel reference = model::TinyModel::init(ref_cfg, bc).frozen_copy();

  Rng rng(derive_seed(cfg.seed, "gradcheck"));
  const auto pairs = random_pairs(o.n_pairs, o.vocab, rng);
  const align::LossKind kind = align::parse_loss_kind(loss);
  std::vector<align::RefLogprobs> refs;
  for (const auto& p : pairs) refs.push_back(align::reference_logprobs(reference, p));

  model::Gradients analytic = model::Gradients::zeros_like(policy);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    analytic.add(align::pair_gradient(policy, refs[i], pairs[i], kind, cfg.schedule).grads);
  if (hooks.tamper_gradients) hooks.tamper_gradients(analytic);

  const auto total_loss = [&](const model::TinyModel& m) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      ad::Tape tape;
      const model::Binding b(tape, m, false);
      sum += align::pair_loss(b, refs[i], pairs[i], align::pair_schedule(pairs[i], kind, cfg.schedule)).scalar();
    }
    return sum;
  };
  const auto report = model::finite_difference_check(policy, total_loss, analytic, o.h, o.tol);

  out << "loss " << loss << ", bias " << bias << ", " << policy.parameter_count() << " parameters, h=" << o.h
      << ", tol=" << o.tol << "\n";
  out << std::left << std::setw(28) << "tensor" << std::setw(9) << "entries" << std::setw(14) << "rel_error"
      << std::setw(14) << "max_abs" << "result\n";
  for (const auto& t : report.tensors) {
    std::ostringstream rel, abs;
    rel << std::scientific << std::setprecision(3) << t.rel_error;
    abs << std::scientific << std::setprecision(3) << t.max_abs_error;
    out << std::left << std::setw(28) << t.name << std::setw(9) << t.entries << std::setw(14) << rel.str()
        << std::setw(14) << abs.str() << (t.pass ? "PASS" : "FAIL") << "\n";
  }
  out << (report.pass ? "PASS" : "FAIL") << " worst rel_error " << report.worst << "\n";
  return report.pass ? 0 : exit_code(ErrorCode::NumericalFailure);
}

// ---------------------------------------------------------------- bench

int cmd_bench(const RunConfig& cfg, const std::string& suite, const std::string& bias, const std::string& ckpt,
              const std::string& csv_path, const std::string& transcripts, int threads, std::ostream& out) {
  const model::TinyModel m = ckpt.empty() ? model::TinyModel::init(model_config(cfg), bias_for(cfg, bias))
                                          : model::load_checkpoint(ckpt);
  const auto cases = bench::make_suite(suite, cfg.seed, cfg.bench);
  const bench::BenchReport r = bench::run_bench(m, cases, 8, threads);
  ensure_parent(csv_path);
  bench::write_summary_csv(r, csv_path);
  if (!transcripts.empty()) {
    ensure_parent(transcripts);
    bench::write_transcripts_jsonl(r, transcripts);
  }
  out << read_text(csv_path);
  return 0;
}

// ---------------------------------------------------------------- regret-sim

int cmd_regret_sim(const RunConfig& cfg, const std::vector<double>& deltas, const std::vector<double>& taus,
                   int trials, double sigma, int horizon, const std::string& drift, const std::string& out_path,
                   const std::string& proxy_path, int threads, std::ostream& out, std::ostream& err) {
  sim::DriftSpec tmpl;
  tmpl.noise_sigma = sigma;
  tmpl.horizon_T = horizon;
  tmpl.seed = derive_seed(cfg.seed, "sim");
  tmpl.kind = sim::parse_drift_kind(drift);
  if (trials < 1) fail(ErrorCode::InvalidConfig, "--trials must be >= 1");
  const sim::SweepResult r = sim::sweep_tau(deltas, taus, tmpl, trials, threads);
  ensure_parent(out_path);
  sim::write_sweep_csv(r, out_path);
  if (!proxy_path.empty()) {
    ensure_parent(proxy_path);
    sim::write_proxy_table_csv(cfg.schedule, proxy_path);
  }
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";
  out << "slope " << r.slope << " intercept " << r.intercept << " r2 " << r.r2 << "\n";
  for (std::size_t i = 0; i < r.deltas.size(); ++i)
    out << "delta " << r.deltas[i] << " tau* " << r.tau_star[i] << " (analytic "
        << sim::analytic_tau_star(sigma, r.deltas[i]) << ")\n";
  out << "sweep: " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- export-bias-curve

int cmd_export_bias_curve(const std::vector<std::string>& lambdas, double tau_fixed, int max_delta,
                          const std::string& out_path, std::ostream& out) {
  if (lambdas.empty()) fail(ErrorCode::InvalidConfig, "--lambda needs at least one value");
  if (max_delta < 0) fail(ErrorCode::InvalidConfig, "--max-delta must be >= 0");
  std::vector<double> values;
  for (const auto& l : lambdas) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(l, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != l.size() || !(v >= 0.0)) fail(ErrorCode::InvalidConfig, "bad --lambda value '" + l + "'");
    values.push_back(v);
  }
  if (!(tau_fixed > 0.0)) fail(ErrorCode::InvalidConfig, "--tau-fixed must be positive");
  std::ostringstream csv;
  csv << std::setprecision(17) << "delta";
  for (const auto& l : lambdas) csv << ",bias_lambda_" << l;
  csv << '\n';
  // Query at position delta against the key at 0, no anchor zone.
  for (int d = 0; d <= max_delta; ++d) {
    csv << d;
    for (double lambda : values) csv << ',' << attn::dual_zone_bias(d, 0, lambda, tau_fixed, 0);
    csv << '\n';
  }
  write_text(out_path, csv.str());
  for (std::size_t k = 0; k < values.size(); ++k) {
    attn::BiasConfig b = attn::BiasConfig::dual_zone(values[k], tau_fixed);
    const auto radius = attn::effective_radius(b, 0.01);
    out << "lambda " << lambdas[k] << ": effective radius (eps=0.01) "
        << (radius.infinite ? std::string("inf") : std::to_string(radius.value)) << "\n";
  }
  out << "curve: " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- validate-dataset

int cmd_validate_dataset(const RunConfig& cfg, const std::string& data_path, std::ostream& out) {
  const auto pairs = data::read_pairs_jsonl(data_path);
  const auto violations = data::validate_pairs(pairs, cfg.data.filters);
  for (const auto& v : violations) out << "violation: " << v << "\n";
  out << pairs.size() << " pairs, " << violations.size() << " violations\n";
  return violations.empty() ? 0 : exit_code(ErrorCode::InvalidInput);
}

// ---------------------------------------------------------------- judge-eval

int cmd_judge_eval(const RunConfig& cfg, const std::string& items_path, const std::string& out_path,
                   std::ostream& out) {
  std::vector<bench::JudgeClient::Item> items;
  std::istringstream lines(read_text(items_path));
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      items.push_back({j.at("question").get<std::string>(), j.at("answer_a").get<std::string>(),
                       j.at("answer_b").get<std::string>()});
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidInput, items_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (items.empty()) fail(ErrorCode::InvalidInput, items_path + " has no items");
  const bench::JudgeClient client(cfg.providers.judge, bench::http_judge_transport(cfg.providers.judge));
  const auto verdicts = client.judge_many(items, derive_seed(cfg.seed, "judge"));
  std::ostringstream jsonl;
  int a = 0, b = 0, tie = 0;
  for (const auto& v : verdicts) {
    jsonl << json{{"winner", bench::to_string(v.winner)}, {"reason", v.reason}, {"order_flipped", v.order_flipped}}
                 .dump()
          << "\n";
    (v.winner == bench::Winner::A ? a : v.winner == bench::Winner::B ? b : tie)++;
  }
  write_text(out_path, jsonl.str());
  out << "A " << a << " B " << b << " Tie " << tie << "\nverdicts: " << out_path << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const AppHooks& hooks) {
  CLI::App app{"Temporal preference-alignment lab: data, training, benchmarks and diagnostics"};
  app.name("inertia-lab");
  app.require_subcommand(1);

  Globals g;
  std::uint64_t seed = 0;
  std::string output_dir;
  app.add_option("-c,--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "root seed (overrides config)");
  auto* out_opt = app.add_option("--output-dir", output_dir, "output directory (overrides config)");
  app.add_option("--threads", g.threads, "worker threads; 1 is fully serial")->check(CLI::PositiveNumber);

  const std::vector<std::string> bias_names = {"none", "dual-zone", "matb"};
  const std::vector<std::string> loss_names = {"dpo", "tdpo-dkl"};

  // gen-data
  std::string gd_out, gd_audit;
  auto* gen = app.add_subcommand("gen-data", "synthesize dialogues and write filtered preference pairs");
  gen->add_option("--out", gd_out, "pairs JSONL (default <output_dir>/pairs.jsonl)");
  gen->add_option("--audit", gd_audit, "audit JSON (default <output_dir>/audit.json)");

  // pretrain
  std::string pt_bias, pt_out;
  int pt_dialogues = -1;
  auto* pre = app.add_subcommand("pretrain", "language-model warm-up on synthetic dialogues");
  pre->add_option("--bias", pt_bias, "attention bias (default from config)")->check(CLI::IsMember(bias_names));
  pre->add_option("--out", pt_out, "checkpoint (default <output_dir>/base.ckpt)");
  pre->add_option("--dialogues", pt_dialogues, "warm-up dialogues (overrides config)")->check(CLI::NonNegativeNumber);

  // train
  std::string tr_data, tr_loss, tr_bias, tr_init, tr_ckpt, tr_report;
  double tr_val = 0.1;
  auto* train = app.add_subcommand("train", "preference training with dpo or tdpo-dkl");
  train->add_option("--data", tr_data, "pairs JSONL")->required();
  train->add_option("--loss", tr_loss, "loss (default from config)")->check(CLI::IsMember(loss_names));
  train->add_option("--bias", tr_bias, "attention bias (default from config)")->check(CLI::IsMember(bias_names));
  train->add_option("--init", tr_init, "initial checkpoint (default: fresh init)")->check(CLI::ExistingFile);
  train->add_option("--out", tr_ckpt, "checkpoint (default <output_dir>/policy.ckpt)");
  train->add_option("--report", tr_report, "per-epoch CSV (default <output_dir>/report.csv)");
  train->add_option("--val-fraction", tr_val, "held-out fraction of pairs");

  // grad-check
  GradCheckOptions gc;
  std::string gc_loss, gc_bias;
  bool gc_corrupt = false;
  auto* grad = app.add_subcommand("grad-check", "finite-difference check of full-model gradients");
  grad->add_option("--loss", gc_loss, "loss (default from config)")->check(CLI::IsMember(loss_names));
  grad->add_option("--bias", gc_bias, "attention bias (default from config)")->check(CLI::IsMember(bias_names));
  grad->add_option("--d-model", gc.d_model);
  grad->add_option("--heads", gc.n_heads);
  grad->add_option("--layers", gc.n_layers);
  grad->add_option("--vocab", gc.vocab);
  grad->add_option("--max-seq", gc.max_seq);
  grad->add_option("--pairs", gc.n_pairs)->check(CLI::PositiveNumber);
  grad->add_option("--step", gc.h, "central-difference step");
  grad->add_option("--tol", gc.tol, "relative-error tolerance");
  grad->add_flag("--corrupt-backward", gc_corrupt, "negative control: perturb analytic gradients by 1%")
      ->group("");

  // bench
  std::string bn_suite = "all", bn_bias, bn_ckpt, bn_out, bn_transcripts;
  int bn_cases = -1;
  auto* bench_cmd = app.add_subcommand("bench", "run the stress-test suites");
  bench_cmd->add_option("--suite", bn_suite)->check(CLI::IsMember({"needle", "inertia", "pingpong", "flooding", "all"}));
  bench_cmd->add_option("--bias", bn_bias, "bias for a freshly initialized model")->check(CLI::IsMember(bias_names));
  bench_cmd->add_option("--checkpoint", bn_ckpt, "model to evaluate")->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", bn_out, "summary CSV (default <output_dir>/bench_<suite>.csv)");
  bench_cmd->add_option("--transcripts", bn_transcripts, "per-case JSONL");
  bench_cmd->add_option("--cases", bn_cases, "cases per generator (overrides config)")->check(CLI::PositiveNumber);

  // regret-sim
  std::vector<double> rs_deltas = {0.01, 0.02, 0.05, 0.1, 0.2};
  std::vector<double> rs_taus;
  for (int k = 0; k <= 8; ++k) rs_taus.push_back(static_cast<double>(1 << k));
  int rs_trials = 2000, rs_horizon = 2000;
  double rs_sigma = 1.0;
  std::string rs_drift = "persistent", rs_out, rs_proxy;
  auto* regret = app.add_subcommand("regret-sim", "tau sweep of the exponentially weighted estimator under drift");
  regret->add_option("--delta-grid", rs_deltas)->delimiter(',');
  regret->add_option("--tau-grid", rs_taus)->delimiter(',');
  regret->add_option("--trials", rs_trials);
  regret->add_option("--sigma", rs_sigma);
  regret->add_option("--horizon", rs_horizon);
  regret->add_option("--drift", rs_drift)->check(CLI::IsMember({"persistent", "random-walk"}));
  regret->add_option("--out", rs_out, "sweep CSV (default <output_dir>/sweep.csv)");
  regret->add_option("--proxy-table", rs_proxy, "also write the conflict-proxy comparison CSV");

  // export-bias-curve
  std::vector<std::string> eb_lambdas;
  double eb_tau = -1.0;
  int eb_max_delta = 128;
  std::string eb_out;
  auto* curve = app.add_subcommand("export-bias-curve", "dual-zone bias against token distance");
  curve->add_option("--lambda", eb_lambdas, "comma-separated intensities (default bias.lambda)")->delimiter(',');
  curve->add_option("--tau-fixed", eb_tau, "decay scale (default bias.tau_fixed)");
  curve->add_option("--max-delta", eb_max_delta);
  curve->add_option("--out", eb_out, "CSV (default <output_dir>/bias_curve.csv)");

  // validate-dataset
  std::string vd_data;
  auto* validate = app.add_subcommand("validate-dataset", "check a pairs file against the filter invariants");
  validate->add_option("--data", vd_data)->required();

  // judge-eval
  std::string je_items, je_out;
  auto* judge = app.add_subcommand("judge-eval", "pairwise external judging (needs JUDGE_API_KEY)");
  judge->add_option("--items", je_items, "JSONL of {question, answer_a, answer_b}")->required();
  judge->add_option("--out", je_out, "verdict JSONL (default <output_dir>/verdicts.jsonl)");

  // dump-config
  auto* dump = app.add_subcommand("dump-config", "print the effective configuration");

  std::vector<std::string> argv_storage{"inertia-lab"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (seed_opt->count()) g.seed = seed;
    if (out_opt->count()) g.output_dir = output_dir;
    RunConfig cfg = resolve(g);
    const std::string cfg_bias = attn::to_string(cfg.bias.variant);
    const std::string cfg_loss = align::to_string(cfg.train.loss_kind);
    auto pick = [](const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; };

    if (*gen)
      return cmd_gen_data(cfg, pick(gd_out, in_output_dir(cfg, "pairs.jsonl")),
                          pick(gd_audit, in_output_dir(cfg, "audit.json")), g.threads, out);
    if (*pre) {
      if (pt_dialogues >= 0) cfg.warmup.dialogues = pt_dialogues;
      return cmd_pretrain(cfg, pick(pt_bias, cfg_bias), pick(pt_out, in_output_dir(cfg, "base.ckpt")), g.threads,
                          out);
    }
    if (*train)
      return cmd_train(cfg, tr_data, pick(tr_loss, cfg_loss), pick(tr_bias, cfg_bias), tr_init,
                       pick(tr_ckpt, in_output_dir(cfg, "policy.ckpt")),
                       pick(tr_report, in_output_dir(cfg, "report.csv")), tr_val, g.threads, out, err);
    if (*grad) {
      AppHooks h = hooks;
      if (gc_corrupt)
        h.tamper_gradients = [](model::Gradients& grads) {
          for (auto& v : grads.values) v *= 1.01;
        };
      return cmd_grad_check(cfg, gc, pick(gc_loss, cfg_loss), pick(gc_bias, cfg_bias), h, out);
    }
    if (*bench_cmd) {
      if (bn_cases > 0) cfg.bench.n_cases = bn_cases;
      return cmd_bench(cfg, bn_suite, pick(bn_bias, cfg_bias), bn_ckpt,
                       pick(bn_out, in_output_dir(cfg, "bench_" + bn_suite + ".csv")), bn_transcripts, g.threads,
                       out);
    }
    if (*regret)
      return cmd_regret_sim(cfg, rs_deltas, rs_taus, rs_trials, rs_sigma, rs_horizon, rs_drift,
                            pick(rs_out, in_output_dir(cfg, "sweep.csv")), rs_proxy, g.threads, out, err);
    if (*curve) {
      if (eb_lambdas.empty()) {
        std::ostringstream l;
        l << cfg.bias.lambda;
        eb_lambdas.push_back(l.str());
      }
      return cmd_export_bias_curve(eb_lambdas, eb_tau > 0.0 ? eb_tau : cfg.bias.tau_fixed, eb_max_delta,
                                   pick(eb_out, in_output_dir(cfg, "bias_curve.csv")), out);
    }
    if (*validate) return cmd_validate_dataset(cfg, vd_data, out);
    if (*judge) return cmd_judge_eval(cfg, je_items, pick(je_out, in_output_dir(cfg, "verdicts.jsonl")), out);
    if (*dump) {
      out << dump_config(cfg);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 2;
}

}  // namespace inertia::cli
