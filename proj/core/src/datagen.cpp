#include "inertia/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "inertia/error.hpp"
#include "inertia/parallel.hpp"
#include "inertia/rng.hpp"

namespace inertia::data {

using nlohmann::ordered_json;

const char* to_string(Speaker s) { return s == Speaker::User ? "user" : "system"; }

namespace phrase {
std::string declare(const std::string& key, const std::string& value) { return "set " + key + " " + value + " ."; }
std::string revise(const std::string& key, const std::string& value) {
  return "actually " + key + " " + value + " now .";
}
std::string ack() { return "noted ."; }
std::string query(const std::string& key) { return "what " + key + " ?"; }
std::string answer(const std::string& key, const std::string& value) { return key + " " + value + " ."; }
std::string code_fact(const std::string& d1, const std::string& d2) { return "code " + d1 + " " + d2 + " ."; }
std::string code_query() { return "what code ?"; }
}  // namespace phrase

namespace {

const std::vector<std::string> kFillerReplies = {"that sounds nice .", "good to know .", "tell me about it .",
                                                 "sounds fun .", "ok sure ."};

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng() % v.size())];
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string filler_sentence(const CorpusSpec& spec, Rng& rng) {
  const auto& words = Vocabulary::standard().filler();
  const int n = spec.filler_min + static_cast<int>(rng() % static_cast<std::uint64_t>(spec.filler_max - spec.filler_min + 1));
  std::string s;
  for (int i = 0; i < n; ++i) s += pick(words, rng) + " ";
  return s + ".";
}

enum class Event { Free, Declare, Flip, Restate, Query, CodeQuery, Filler };

struct Slot {
  Event event = Event::Free;
  std::string key;
  std::string value;
};

Dialogue make_dialogue(const CorpusSpec& spec, Rng& rng) {
  const Vocabulary& vocab = Vocabulary::standard();
  const int E = spec.turns_per_dialogue;
  Dialogue d;
  std::string code;
  if (uniform01(rng) < spec.anchor_prob) {
    const std::string d1 = pick(vocab.digits(), rng), d2 = pick(vocab.digits(), rng);
    d.anchor = phrase::code_fact(d1, d2);
    code = d1 + " " + d2;
  }

  std::vector<Slot> slots(static_cast<std::size_t>(E + 1));
  auto free_before = [&](int limit) {
    for (int s = 1; s < limit; ++s)
      if (slots[static_cast<std::size_t>(s)].event == Event::Free) return s;
    return 0;
  };

  // Explicit flips, chained per key, each preceded by one declaration.
  std::set<std::string> flipped_keys;
  std::vector<FactFlip> flips = spec.flips;
  std::sort(flips.begin(), flips.end(), [](const FactFlip& a, const FactFlip& b) { return a.turn < b.turn; });
  for (const auto& f : flips) {
    slots[static_cast<std::size_t>(f.turn)] = {Event::Flip, f.key, f.new_value};
    if (!flipped_keys.count(f.key)) {
      const int s = free_before(f.turn);
      if (s == 0) fail(ErrorCode::InvalidConfig, "no free turn to declare '" + f.key + "' before its flip");
      slots[static_cast<std::size_t>(s)] = {Event::Declare, f.key, f.old_value};
      flipped_keys.insert(f.key);
    }
    d.flips.push_back(f);
  }

  // Three keys are declared in every dialogue; random flips revise one of them.
  std::vector<std::string> keys;
  for (const auto& k : vocab.fact_keys())
    if (!flipped_keys.count(k.name)) keys.push_back(k.name);
  for (std::size_t i = keys.size(); i > 1; --i) std::swap(keys[i - 1], keys[static_cast<std::size_t>(rng() % i)]);
  keys.resize(std::min<std::size_t>(3, keys.size()));

  std::vector<std::pair<std::string, std::string>> initial;
  for (const auto& k : keys) initial.emplace_back(k, pick(vocab.fact_key(k).values, rng));

  for (int r = 0; r < spec.random_flips && r < static_cast<int>(initial.size()); ++r) {
    const auto& [key, old_value] = initial[static_cast<std::size_t>(r)];
    const int lo = std::max(3, E / 2), hi = E - 1;
    if (hi < lo) break;
    std::vector<int> candidates;
    for (int s = lo; s <= hi; ++s)
      if (slots[static_cast<std::size_t>(s)].event == Event::Free) candidates.push_back(s);
    if (candidates.empty()) break;
    const int turn = pick(candidates, rng);
    const int decl = free_before(turn);
    if (decl == 0) break;
    std::string new_value;
    do new_value = pick(vocab.fact_key(key).values, rng);
    while (new_value == old_value);
    slots[static_cast<std::size_t>(decl)] = {Event::Declare, key, old_value};
    slots[static_cast<std::size_t>(turn)] = {Event::Flip, key, new_value};
    d.flips.push_back({turn, key, old_value, new_value});
  }
  for (std::size_t r = static_cast<std::size_t>(std::max(spec.random_flips, 0)); r < initial.size(); ++r) {
    const int s = free_before(E);
    if (s == 0) break;
    slots[static_cast<std::size_t>(s)] = {Event::Declare, initial[r].first, initial[r].second};
  }
  std::sort(d.flips.begin(), d.flips.end(), [](const FactFlip& a, const FactFlip& b) { return a.turn < b.turn; });

  // Walk the exchanges in order, tracking the live state.
  std::map<std::string, std::string> state;
  std::string last_flipped;
  for (const auto& f : d.flips) last_flipped = f.key;
  for (int s = 1; s <= E; ++s) {
    Slot& slot = slots[static_cast<std::size_t>(s)];
    std::vector<std::string> known;
    for (const auto& [k, v] : state) known.push_back(k);
    if (slot.event == Event::Free) {
      if (s == E && !last_flipped.empty() && state.count(last_flipped)) {
        slot = {Event::Query, last_flipped, {}};
      } else if (s == E && !known.empty()) {
        slot = {Event::Query, pick(known, rng), {}};
      } else {
        const double u = uniform01(rng);
        if (u < 0.35 && !known.empty()) slot = {Event::Query, pick(known, rng), {}};
        else if (u < 0.55 && !known.empty()) slot = {Event::Restate, pick(known, rng), {}};
        else if (u < 0.65 && !code.empty()) slot = {Event::CodeQuery, {}, {}};
        else slot = {Event::Filler, {}, {}};
      }
    }
    std::string user, reply;
    switch (slot.event) {
      case Event::Declare:
        state[slot.key] = slot.value;
        user = phrase::declare(slot.key, slot.value);
        reply = phrase::ack();
        break;
      case Event::Flip:
        state[slot.key] = slot.value;
        user = phrase::revise(slot.key, slot.value);
        reply = phrase::ack();
        break;
      case Event::Restate:
        user = phrase::declare(slot.key, state[slot.key]);
        reply = phrase::ack();
        break;
      case Event::Query:
        user = phrase::query(slot.key);
        reply = phrase::answer(slot.key, state[slot.key]);
        break;
      case Event::CodeQuery:
        user = phrase::code_query();
        reply = "code " + code + " .";
        break;
      case Event::Filler:
      case Event::Free:
        user = filler_sentence(spec, rng);
        reply = pick(kFillerReplies, rng);
        break;
    }
    d.turns.push_back({Speaker::User, user, s});
    d.turns.push_back({Speaker::System, reply, s});
  }
  return d;
}

std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

void CorpusSpec::validate() const {
  if (n_dialogues < 0) fail(ErrorCode::InvalidConfig, "data.n_dialogues must be >= 0");
  if (turns_per_dialogue < 1) fail(ErrorCode::InvalidConfig, "data.turns_per_dialogue must be >= 1");
  if (random_flips < 0) fail(ErrorCode::InvalidConfig, "data.random_flips must be >= 0");
  if (!(anchor_prob >= 0.0 && anchor_prob <= 1.0)) fail(ErrorCode::InvalidConfig, "data.anchor_prob must lie in [0, 1]");
  if (filler_min < 1 || filler_max < filler_min) fail(ErrorCode::InvalidConfig, "data filler bounds invalid");
  const Vocabulary& v = Vocabulary::standard();
  std::map<std::string, std::string> chain;
  std::set<int> turns;
  std::vector<FactFlip> sorted = flips;
  std::sort(sorted.begin(), sorted.end(), [](const FactFlip& a, const FactFlip& b) { return a.turn < b.turn; });
  for (const auto& f : sorted) {
    if (f.turn < 2 || f.turn > turns_per_dialogue)
      fail(ErrorCode::InvalidConfig, "flip turn " + std::to_string(f.turn) + " outside [2, turns_per_dialogue]");
    if (!turns.insert(f.turn).second) fail(ErrorCode::InvalidConfig, "two flips share turn " + std::to_string(f.turn));
    const FactKey& k = v.fact_key(f.key);
    auto has = [&](const std::string& val) { return std::find(k.values.begin(), k.values.end(), val) != k.values.end(); };
    if (!has(f.old_value) || !has(f.new_value))
      fail(ErrorCode::InvalidConfig, "flip values must belong to key '" + f.key + "'");
    if (f.old_value == f.new_value) fail(ErrorCode::InvalidConfig, "flip must change the value");
    if (chain.count(f.key) && chain[f.key] != f.old_value)
      fail(ErrorCode::InvalidConfig, "flips of '" + f.key + "' do not chain");
    chain[f.key] = f.new_value;
  }
}

int Dialogue::exchanges() const { return turns.empty() ? 0 : turns.back().index; }

const Turn& Dialogue::user(int index) const {
  for (const auto& t : turns)
    if (t.index == index && t.speaker == Speaker::User) return t;
  fail(ErrorCode::InvalidInput, "no user turn " + std::to_string(index));
}

const Turn& Dialogue::system(int index) const {
  for (const auto& t : turns)
    if (t.index == index && t.speaker == Speaker::System) return t;
  fail(ErrorCode::InvalidInput, "no system turn " + std::to_string(index));
}

std::vector<Dialogue> synth_corpus(const CorpusSpec& spec) {
  spec.validate();
  const std::uint64_t root = derive_seed(spec.seed, "data");
  std::vector<Dialogue> out;
  out.reserve(static_cast<std::size_t>(spec.n_dialogues));
  for (int i = 0; i < spec.n_dialogues; ++i) {
    Rng rng(derive_seed(root, static_cast<std::uint64_t>(i)));
    out.push_back(make_dialogue(spec, rng));
  }
  return out;
}

std::vector<Contradiction> find_contradictions(const Dialogue& d) {
  const Vocabulary& v = Vocabulary::standard();
  std::map<std::string, std::pair<std::string, int>> seen;
  std::vector<Contradiction> out;
  for (const auto& turn : d.turns) {
    if (turn.speaker != Speaker::User) continue;
    const auto w = words_of(turn.text);
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      const FactKey* key = nullptr;
      for (const auto& k : v.fact_keys())
        if (k.name == w[i]) key = &k;
      if (!key || std::find(key->values.begin(), key->values.end(), w[i + 1]) == key->values.end()) continue;
      const std::string& value = w[i + 1];
      auto it = seen.find(key->name);
      if (it != seen.end() && it->second.first != value)
        out.push_back({key->name, it->second.first, value, it->second.second, turn.index});
      seen[key->name] = {value, turn.index};
    }
  }
  return out;
}

int whitespace_tokens(const std::string& s) { return static_cast<int>(words_of(s).size()); }

double length_ratio(const std::string& a, const std::string& b) {
  const int la = whitespace_tokens(a), lb = whitespace_tokens(b);
  if (la == 0 || lb == 0) fail(ErrorCode::InvalidInput, "length ratio of an empty response");
  return static_cast<double>(std::max(la, lb)) / static_cast<double>(std::min(la, lb));
}

namespace {

// nullopt when the text has no usable embedding (empty or hash-cancelled).
std::optional<embed::Embedding> embed_or_none(const embed::Provider& provider, const std::string& text) {
  try {
    return provider.embed(text);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidInput) return std::nullopt;
    throw;
  }
}

}  // namespace

BuildResult build_pairs(const std::vector<Dialogue>& corpus, const embed::Provider& provider, int gap_min,
                        std::uint64_t seed) {
  if (gap_min < 1) fail(ErrorCode::InvalidConfig, "gap_min must be >= 1");
  BuildResult result;
  const std::uint64_t root = derive_seed(seed, "pairs");
  for (std::size_t di = 0; di < corpus.size(); ++di) {
    const Dialogue& d = corpus[di];
    const int E = d.exchanges();
    if (E <= gap_min) {
      ++result.skipped_dialogues;
      continue;
    }
    // Turns whose embedding degenerates to zero carry no direction and are
    // left out of the conflict score.
    const auto last = embed_or_none(provider, d.user(E).text);
    double conflict = 0.0;
    bool has_history = false;
    if (last) {
      double best = -1.0;
      for (int i = 1; i < E; ++i)
        if (const auto e = embed_or_none(provider, d.user(i).text)) {
          best = std::max(best, embed::cosine_similarity(*last, *e));
          has_history = true;
        }
      if (has_history) conflict = best;
    }

    Rng rng(derive_seed(root, static_cast<std::uint64_t>(di)));
    for (int t = gap_min + 1; t <= E; ++t) {
      PreferencePair p;
      p.anchor = d.anchor;
      for (const auto& turn : d.turns) {
        if (turn.index > t || (turn.index == t && turn.speaker == Speaker::System)) break;
        p.context.push_back(turn);
      }
      const int r = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(t - gap_min));
      p.chosen = d.system(t).text;
      p.rejected = d.system(r).text;
      p.t = t;
      p.T = E;
      p.gap = t - r;
      p.len_ratio = length_ratio(p.chosen, p.rejected);
      p.conflict = conflict;
      p.has_history = has_history;
      result.pairs.push_back(std::move(p));
    }
  }
  return result;
}

FilterResult filter_similarity(const std::vector<PreferencePair>& pairs, const embed::Provider& provider,
                               double threshold, int threads) {
  std::vector<double> sims(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto a = embed_or_none(provider, pairs[i].chosen);
    const auto b = embed_or_none(provider, pairs[i].rejected);
    sims[i] = a && b ? embed::cosine_similarity(*a, *b) : std::numeric_limits<double>::quiet_NaN();
  });
  FilterResult out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    PreferencePair p = pairs[i];
    p.sim = sims[i];
    if (std::isnan(p.sim)) ++out.degenerate;
    // NaN compares false, so an unembeddable pair is discarded too.
    (p.sim <= threshold ? out.kept : out.discarded).push_back(std::move(p));
  }
  return out;
}

FilterResult filter_length(const std::vector<PreferencePair>& pairs, double max_ratio) {
  FilterResult out;
  for (const auto& src : pairs) {
    PreferencePair p = src;
    p.len_ratio = length_ratio(p.chosen, p.rejected);
    (p.len_ratio > max_ratio ? out.discarded : out.kept).push_back(std::move(p));
  }
  return out;
}

std::string Audit::to_json() const {
  ordered_json j = {{"dialogues", dialogues},     {"skipped_dialogues", skipped_dialogues},
                    {"generated", generated},     {"similarity", {{"kept", sim_kept}, {"discarded", sim_discarded}, {"degenerate", sim_degenerate}}},
                    {"length", {{"kept", len_kept}, {"discarded", len_discarded}}}, {"final", final_pairs}};
  return j.dump(2);
}

PipelineResult run_pipeline(const CorpusSpec& spec, const embed::Provider& provider, const DataFilters& filters,
                            int threads) {
  PipelineResult out;
  out.corpus = synth_corpus(spec);
  if (out.corpus.empty()) fail(ErrorCode::InvalidInput, "corpus spec produces no dialogues");
  BuildResult built = build_pairs(out.corpus, provider, filters.gap_min, spec.seed);
  FilterResult by_sim = filter_similarity(built.pairs, provider, filters.sim_threshold, threads);
  FilterResult by_len = filter_length(by_sim.kept, filters.max_len_ratio);
  out.audit.dialogues = static_cast<int>(out.corpus.size());
  out.audit.skipped_dialogues = built.skipped_dialogues;
  out.audit.generated = static_cast<int>(built.pairs.size());
  out.audit.sim_kept = static_cast<int>(by_sim.kept.size());
  out.audit.sim_discarded = static_cast<int>(by_sim.discarded.size());
  out.audit.sim_degenerate = by_sim.degenerate;
  out.audit.len_kept = static_cast<int>(by_len.kept.size());
  out.audit.len_discarded = static_cast<int>(by_len.discarded.size());
  out.audit.final_pairs = out.audit.len_kept;
  out.pairs = std::move(by_len.kept);
  return out;
}

std::vector<std::string> validate_pairs(const std::vector<PreferencePair>& pairs, const DataFilters& filters) {
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::string at = "pair " + std::to_string(i + 1) + ": ";
    if (p.chosen.empty() || p.rejected.empty()) {
      errors.push_back(at + "empty response");
      continue;
    }
    if (!(p.sim <= filters.sim_threshold)) errors.push_back(at + "sim " + std::to_string(p.sim) + " above threshold");
    const double ratio = length_ratio(p.chosen, p.rejected);
    if (ratio > filters.max_len_ratio) errors.push_back(at + "length ratio " + std::to_string(ratio) + " above limit");
    if (std::abs(ratio - p.len_ratio) > 1e-9) errors.push_back(at + "recorded len_ratio does not match responses");
    if (p.gap < filters.gap_min) errors.push_back(at + "gap " + std::to_string(p.gap) + " below minimum");
    if (p.t < 1 || p.t > p.T) errors.push_back(at + "turn index t outside [1, T]");
    if (p.gap >= p.t) errors.push_back(at + "gap reaches before the first turn");
    if (p.context.empty() || p.context.back().speaker != Speaker::User || p.context.back().index != p.t)
      errors.push_back(at + "context must end with the user turn at t");
    if (!(p.conflict >= -1.0 && p.conflict <= 1.0)) errors.push_back(at + "conflict outside [-1, 1]");
  }
  return errors;
}

std::string to_jsonl_line(const PreferencePair& p) {
  ordered_json ctx = ordered_json::array();
  for (const auto& t : p.context) ctx.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}, {"index", t.index}});
  ordered_json j = {{"context", ctx},     {"chosen", p.chosen},     {"rejected", p.rejected},
                    {"t", p.t},           {"T", p.T},               {"sim", p.sim},
                    {"len_ratio", p.len_ratio}, {"gap", p.gap},     {"conflict", p.conflict},
                    {"anchor", p.anchor}, {"has_history", p.has_history}};
  return j.dump();
}

void write_pairs_jsonl(const std::vector<PreferencePair>& pairs, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidInput, "cannot write " + path);
  for (const auto& p : pairs) out << to_jsonl_line(p) << '\n';
}

std::vector<PreferencePair> read_pairs_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidInput, "cannot open " + path);
  std::vector<PreferencePair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = ordered_json::parse(line);
      PreferencePair p;
      for (const auto& t : j.at("context")) {
        const std::string sp = t.at("speaker").get<std::string>();
        if (sp != "user" && sp != "system") fail(ErrorCode::InvalidInput, "unknown speaker '" + sp + "'");
        p.context.push_back({sp == "user" ? Speaker::User : Speaker::System, t.at("text").get<std::string>(),
                             t.at("index").get<int>()});
      }
      p.chosen = j.at("chosen").get<std::string>();
      p.rejected = j.at("rejected").get<std::string>();
      p.t = j.at("t").get<int>();
      p.T = j.at("T").get<int>();
      p.sim = j.at("sim").get<double>();
      p.len_ratio = j.at("len_ratio").get<double>();
      p.gap = j.at("gap").get<int>();
      p.conflict = j.value("conflict", 0.0);
      p.anchor = j.value("anchor", std::string());
      p.has_history = j.value("has_history", true);
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidInput, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

model::TokenSeq encode_prefix(const std::string& anchor, const std::vector<Turn>& turns, const Vocabulary& v) {
  using model::Role;
  model::TokenSeq seq;
  seq.append(v.bos(), Role::Anchor);
  if (!anchor.empty()) {
    seq.append(v.id("anchor"), Role::Anchor);
    seq.append(v.id(":"), Role::Anchor);
    for (int id : v.encode(anchor)) seq.append(id, Role::Anchor);
  }
  for (const auto& t : turns) {
    seq.append(v.id(to_string(t.speaker)), Role::Context);
    seq.append(v.id(":"), Role::Context);
    for (int id : v.encode(t.text)) seq.append(id, Role::Context);
    if (t.speaker == Speaker::System) seq.append(v.eos(), Role::Context);
  }
  return seq;
}

model::TokenSeq encode_response(const std::string& text, const Vocabulary& v) {
  model::TokenSeq seq = model::TokenSeq::of(v.encode(text), model::Role::Response);
  seq.append(v.eos(), model::Role::Response);
  return seq;
}

align::TokenPair to_token_pair(const PreferencePair& p, const Vocabulary& v) {
  align::TokenPair out;
  out.context = encode_prefix(p.anchor, p.context, v);
  out.context.append(v.id("system"), model::Role::Context);
  out.context.append(v.id(":"), model::Role::Context);
  out.chosen = encode_response(p.chosen, v);
  out.rejected = encode_response(p.rejected, v);
  out.t = p.t;
  out.T = p.T;
  out.conflict = p.conflict;
  out.has_history = p.has_history;
  return out;
}

std::vector<align::TokenPair> to_token_pairs(const std::vector<PreferencePair>& pairs, const Vocabulary& v) {
  std::vector<align::TokenPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(to_token_pair(p, v));
  return out;
}

model::TokenSeq dialogue_tokens(const Dialogue& d, const Vocabulary& v) { return encode_prefix(d.anchor, d.turns, v); }

align::LmExample reply_example(const Dialogue& d, const Vocabulary& v) {
  model::TokenSeq seq = dialogue_tokens(d, v);
  std::vector<bool> score(seq.size(), false);
  const int sys = v.id("system"), colon = v.id(":"), eos = v.eos();
  bool in_reply = false;
  for (std::size_t p = 0; p < seq.size(); ++p) {
    if (in_reply) {
      score[p] = true;
      if (seq.ids[p] == eos) in_reply = false;
    } else if (p > 0 && seq.ids[p] == colon && seq.ids[p - 1] == sys) {
      in_reply = true;
    }
  }
  return {std::move(seq), std::move(score)};
}

std::vector<align::LmExample> warmup_examples(const CorpusSpec& spec, const Vocabulary& v) {
  std::vector<align::LmExample> out;
  for (const auto& d : synth_corpus(spec)) out.push_back(reply_example(d, v));
  return out;
}

}  // namespace inertia::data
