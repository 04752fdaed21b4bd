#include "inertia/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "inertia/error.hpp"
#include "inertia/vocab.hpp"

namespace inertia::cli {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  fail(ErrorCode::InvalidConfig, where + ": " + what);
}

// Reads keys from one JSON object and rejects anything it was not asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_, "expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) bad(where(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) bad(where(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) bad(where(key), "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, std::uint64_t& out, int) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) bad(where(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) bad(where(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) bad(where(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) bad(where(key), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void subsection(Section& parent, const std::string& key, Fn&& fn) {
  if (const json* v = parent.find(key)) {
    Section s(*v, parent.where(key));
    fn(s);
    s.finish();
  }
}

void read_schedule(Section& s, schedule::ScheduleParams& p) {
  s.get("beta0", p.beta0);
  s.get("alpha", p.alpha);
  s.get("tau_base", p.tau_base);
  s.get("gamma", p.gamma);
  s.get("tau_min", p.tau_min);
}

void read_bias(Section& s, attn::BiasConfig& b) {
  std::string variant = attn::to_string(b.variant);
  s.get("variant", variant);
  try {
    b.variant = attn::parse_variant(variant);
  } catch (const Error& e) {
    bad(s.where("variant"), e.what());
  }
  s.get("lambda", b.lambda);
  s.get("tau_fixed", b.tau_fixed);
  s.get("anchor_len", b.anchor_len);
  s.get("learnable", b.learnable);
  if (const json* heads = s.find("heads")) {
    if (!heads->is_array()) bad(s.where("heads"), "expected an array");
    b.head_params.clear();
    for (std::size_t i = 0; i < heads->size(); ++i) {
      Section h((*heads)[i], s.where("heads[" + std::to_string(i) + "]"));
      attn::HeadParams hp;
      h.get("lambda", hp.lambda);
      h.get("tau", hp.tau);
      h.finish();
      b.head_params.push_back(hp);
    }
  }
}

void read_model(Section& s, model::ModelConfig& m) {
  s.get("vocab_size", m.vocab_size);
  s.get("d_model", m.d_model);
  s.get("n_heads", m.n_heads);
  s.get("n_layers", m.n_layers);
  s.get("max_seq", m.max_seq);
  s.get("d_ff", m.d_ff);
}

void read_train(Section& s, align::TrainSettings& t) {
  std::string loss = align::to_string(t.loss_kind);
  s.get("loss", loss);
  try {
    t.loss_kind = align::parse_loss_kind(loss);
  } catch (const Error& e) {
    bad(s.where("loss"), e.what());
  }
  s.get("backbone_lr", t.backbone_lr);
  s.get("bias_lr", t.bias_lr);
  s.get("batch_size", t.batch_size);
  s.get("epochs", t.epochs);
  s.get("beta1", t.moment1);
  s.get("beta2", t.moment2);
  s.get("weight_decay", t.weight_decay);
  s.get("adam_eps", t.adam_eps);
  s.get("clip_norm", t.clip_norm);
}

void read_warmup(Section& s, WarmupConfig& w) {
  s.get("dialogues", w.dialogues);
  s.get("lr", w.settings.lr);
  s.get("epochs", w.settings.epochs);
  s.get("batch_size", w.settings.batch_size);
  s.get("weight_decay", w.settings.weight_decay);
  s.get("clip_norm", w.settings.clip_norm);
}

void read_data(Section& s, DataConfig& d) {
  auto& c = d.corpus;
  s.get("n_dialogues", c.n_dialogues);
  s.get("turns_per_dialogue", c.turns_per_dialogue);
  s.get("random_flips", c.random_flips);
  s.get("anchor_prob", c.anchor_prob);
  s.get("filler_min", c.filler_min);
  s.get("filler_max", c.filler_max);
  if (const json* flips = s.find("flips")) {
    if (!flips->is_array()) bad(s.where("flips"), "expected an array");
    c.flips.clear();
    for (std::size_t i = 0; i < flips->size(); ++i) {
      Section f((*flips)[i], s.where("flips[" + std::to_string(i) + "]"));
      data::FactFlip ff;
      f.get("turn", ff.turn);
      f.get("key", ff.key);
      f.get("old_value", ff.old_value);
      f.get("new_value", ff.new_value);
      f.finish();
      c.flips.push_back(ff);
    }
  }
  s.get("gap_min", d.filters.gap_min);
  s.get("sim_threshold", d.filters.sim_threshold);
  s.get("max_len_ratio", d.filters.max_len_ratio);
}

void read_bench(Section& s, bench::SuiteOptions& b) {
  s.get("n_cases", b.n_cases);
  s.get("trap_reps", b.trap_reps);
  s.get("trap_context_len", b.trap_context_len);
  s.get("needle_context_len", b.needle_context_len);
  s.get("pingpong_toggles", b.pingpong_toggles);
  s.get("flooding_filler", b.flooding_filler);
  s.get("flooding_factor", b.flooding_factor);
}

const char* provider_kind_name(embed::ProviderKind k) {
  return k == embed::ProviderKind::HashedBag ? "hashed-bag" : "service";
}

void read_providers(Section& s, ProvidersConfig& p) {
  subsection(s, "embedding", [&](Section& e) {
    std::string kind = provider_kind_name(p.embedding.kind);
    e.get("kind", kind);
    if (kind == "hashed-bag") p.embedding.kind = embed::ProviderKind::HashedBag;
    else if (kind == "service") p.embedding.kind = embed::ProviderKind::ExternalService;
    else bad(e.where("kind"), "expected hashed-bag or service, got '" + kind + "'");
    e.get("dim", p.embedding.dim);
    e.get("endpoint", p.embedding.endpoint);
    e.get("seed", p.embedding.seed, 0);
    e.get("timeout_s", p.embedding.timeout_s);
    e.get("retries", p.embedding.retries);
  });
  subsection(s, "judge", [&](Section& j) {
    j.get("endpoint", p.judge.endpoint);
    j.get("model", p.judge.model);
    j.get("timeout_s", p.judge.timeout_s);
    j.get("retries", p.judge.retries);
    j.get("max_in_flight", p.judge.max_in_flight);
  });
}

}  // namespace

void RunConfig::validate() const {
  schedule.validate();
  model.validate();
  bias.validate(model.n_heads, model.max_seq);
  train.validate();
  if (warmup.dialogues < 0) fail(ErrorCode::InvalidConfig, "warmup.dialogues must be >= 0");
  if (warmup.settings.epochs <= 0 || warmup.settings.batch_size <= 0 || !(warmup.settings.lr >= 0.0))
    fail(ErrorCode::InvalidConfig, "warmup epochs/batch_size must be positive and lr >= 0");
  data.corpus.validate();
  if (data.filters.gap_min < 1) fail(ErrorCode::InvalidConfig, "data.gap_min must be >= 1");
  if (!(data.filters.sim_threshold >= -1.0 && data.filters.sim_threshold <= 1.0))
    fail(ErrorCode::InvalidConfig, "data.sim_threshold must lie in [-1, 1]");
  if (!(data.filters.max_len_ratio >= 1.0)) fail(ErrorCode::InvalidConfig, "data.max_len_ratio must be >= 1");
  providers.embedding.validate();
  if (providers.judge.max_in_flight < 1) fail(ErrorCode::InvalidConfig, "providers.judge.max_in_flight must be >= 1");
  const int vocab = data::Vocabulary::standard().size();
  if (model.vocab_size < vocab)
    fail(ErrorCode::InvalidConfig, "model.vocab_size " + std::to_string(model.vocab_size) +
                                       " is smaller than the synthetic vocabulary (" + std::to_string(vocab) + ")");
  if (bench.n_cases < 1) fail(ErrorCode::InvalidConfig, "bench.n_cases must be >= 1");
  if (output_dir.empty()) fail(ErrorCode::InvalidConfig, "output_dir must not be empty");
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section root(j, "");
  root.get("seed", cfg.seed, 0);
  subsection(root, "schedule", [&](Section& s) { read_schedule(s, cfg.schedule); });
  subsection(root, "bias", [&](Section& s) { read_bias(s, cfg.bias); });
  subsection(root, "model", [&](Section& s) { read_model(s, cfg.model); });
  subsection(root, "train", [&](Section& s) { read_train(s, cfg.train); });
  subsection(root, "warmup", [&](Section& s) { read_warmup(s, cfg.warmup); });
  subsection(root, "data", [&](Section& s) { read_data(s, cfg.data); });
  subsection(root, "bench", [&](Section& s) { read_bench(s, cfg.bench); });
  subsection(root, "providers", [&](Section& s) { read_providers(s, cfg.providers); });
  root.get("output_dir", cfg.output_dir);
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidConfig, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["schedule"] = {{"beta0", c.schedule.beta0},
                   {"alpha", c.schedule.alpha},
                   {"tau_base", c.schedule.tau_base},
                   {"gamma", c.schedule.gamma},
                   {"tau_min", c.schedule.tau_min}};
  json heads = json::array();
  for (const auto& h : c.bias.head_params) heads.push_back({{"lambda", h.lambda}, {"tau", h.tau}});
  j["bias"] = {{"variant", attn::to_string(c.bias.variant)},
               {"lambda", c.bias.lambda},
               {"tau_fixed", c.bias.tau_fixed},
               {"anchor_len", c.bias.anchor_len},
               {"learnable", c.bias.learnable},
               {"heads", heads}};
  j["model"] = {{"vocab_size", c.model.vocab_size}, {"d_model", c.model.d_model}, {"n_heads", c.model.n_heads},
                {"n_layers", c.model.n_layers},     {"max_seq", c.model.max_seq}, {"d_ff", c.model.d_ff}};
  j["train"] = {{"loss", align::to_string(c.train.loss_kind)},
                {"backbone_lr", c.train.backbone_lr},
                {"bias_lr", c.train.bias_lr},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"beta1", c.train.moment1},
                {"beta2", c.train.moment2},
                {"weight_decay", c.train.weight_decay},
                {"adam_eps", c.train.adam_eps},
                {"clip_norm", c.train.clip_norm}};
  j["warmup"] = {{"dialogues", c.warmup.dialogues},
                 {"lr", c.warmup.settings.lr},
                 {"epochs", c.warmup.settings.epochs},
                 {"batch_size", c.warmup.settings.batch_size},
                 {"weight_decay", c.warmup.settings.weight_decay},
                 {"clip_norm", c.warmup.settings.clip_norm}};
  json flips = json::array();
  for (const auto& f : c.data.corpus.flips)
    flips.push_back({{"turn", f.turn}, {"key", f.key}, {"old_value", f.old_value}, {"new_value", f.new_value}});
  j["data"] = {{"n_dialogues", c.data.corpus.n_dialogues},
               {"turns_per_dialogue", c.data.corpus.turns_per_dialogue},
               {"random_flips", c.data.corpus.random_flips},
               {"anchor_prob", c.data.corpus.anchor_prob},
               {"filler_min", c.data.corpus.filler_min},
               {"filler_max", c.data.corpus.filler_max},
               {"flips", flips},
               {"gap_min", c.data.filters.gap_min},
               {"sim_threshold", c.data.filters.sim_threshold},
               {"max_len_ratio", c.data.filters.max_len_ratio}};
  j["bench"] = {{"n_cases", c.bench.n_cases},
                {"trap_reps", c.bench.trap_reps},
                {"trap_context_len", c.bench.trap_context_len},
                {"needle_context_len", c.bench.needle_context_len},
                {"pingpong_toggles", c.bench.pingpong_toggles},
                {"flooding_filler", c.bench.flooding_filler},
                {"flooding_factor", c.bench.flooding_factor}};
  j["providers"] = {{"embedding",
                     {{"kind", provider_kind_name(c.providers.embedding.kind)},
                      {"dim", c.providers.embedding.dim},
                      {"endpoint", c.providers.embedding.endpoint},
                      {"seed", c.providers.embedding.seed},
                      {"timeout_s", c.providers.embedding.timeout_s},
                      {"retries", c.providers.embedding.retries}}},
                    {"judge",
                     {{"endpoint", c.providers.judge.endpoint},
                      {"model", c.providers.judge.model},
                      {"timeout_s", c.providers.judge.timeout_s},
                      {"retries", c.providers.judge.retries},
                      {"max_in_flight", c.providers.judge.max_in_flight}}}};
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

attn::BiasConfig bias_for(const RunConfig& cfg, const std::string& variant) {
  attn::BiasConfig b = cfg.bias;
  b.variant = attn::parse_variant(variant);
  if (b.variant == attn::Variant::Matb && b.head_params.empty())
    b.head_params.assign(static_cast<std::size_t>(cfg.model.n_heads), attn::HeadParams{b.lambda, b.tau_fixed});
  b.validate(cfg.model.n_heads, cfg.model.max_seq);
  return b;
}

}  // namespace inertia::cli
