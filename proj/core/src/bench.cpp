#include "inertia/bench.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "inertia/error.hpp"
#include "inertia/parallel.hpp"
#include "inertia/rng.hpp"

namespace inertia::bench {

using data::Speaker;
using data::Turn;
using nlohmann::ordered_json;

const char* to_string(CaseKind k) {
  switch (k) {
    case CaseKind::Needle: return "needle";
    case CaseKind::InertiaTrap: return "inertia_trap";
    case CaseKind::Pingpong: return "pingpong";
    case CaseKind::Flooding: return "flooding";
  }
  return "?";
}

CaseKind parse_case_kind(const std::string& name) {
  for (CaseKind k : {CaseKind::Needle, CaseKind::InertiaTrap, CaseKind::Pingpong, CaseKind::Flooding})
    if (name == to_string(k)) return k;
  fail(ErrorCode::InvalidInput, "unknown bench case kind '" + name + "'");
}

namespace {

const std::vector<std::string> kReplies = {"sounds fun .", "ok sure .", "that sounds nice .", "good to know .",
                                           "tell me about it ."};

int reply_len(const std::string& r) { return data::whitespace_tokens(r); }

// Tokens an exchange adds to the encoded prompt: "user :" text, "system :" reply <eos>.
int exchange_tokens(const std::string& user, const std::string& reply) {
  return 2 + data::whitespace_tokens(user) + 2 + data::whitespace_tokens(reply) + 1;
}

void push_exchange(std::vector<Turn>& turns, const std::string& user, const std::string& reply) {
  const int index = turns.empty() ? 1 : turns.back().index + 1;
  turns.push_back({Speaker::User, user, index});
  turns.push_back({Speaker::System, reply, index});
}

std::pair<std::string, std::string> filler_exchange(int size, Rng& rng) {
  // size = n_words + 1 (".") + reply tokens + 5; n_words in [3, 7].
  std::vector<std::pair<int, std::string>> options;
  for (const auto& r : kReplies) {
    const int n = size - 6 - reply_len(r);
    if (n >= 3 && n <= 7) options.emplace_back(n, r);
  }
  if (options.empty()) fail(ErrorCode::InvalidInput, "no filler exchange of " + std::to_string(size) + " tokens");
  const auto& [n, reply] = options[static_cast<std::size_t>(rng() % options.size())];
  const auto& words = data::Vocabulary::standard().filler();
  std::string user;
  for (int i = 0; i < n; ++i) user += words[static_cast<std::size_t>(rng() % words.size())] + " ";
  return {user + ".", reply};
}

// Filler exchange sizes summing to as much of `budget` as possible (exactly,
// whenever budget is 0, in [12, 18], or >= 24).
std::vector<int> filler_sizes(int budget, Rng& rng) {
  constexpr int lo = 12, hi = 18;
  std::vector<int> sizes;
  while (budget >= lo) {
    if (budget < 2 * lo) {  // one exchange; any slack stays at the end
      sizes.push_back(std::min(budget, hi));
      break;
    }
    int s;
    do s = lo + static_cast<int>(rng() % (hi - lo + 1));
    while (budget - s > 0 && budget - s < lo);
    sizes.push_back(s);
    budget -= s;
  }
  return sizes;
}

// An untrained model may emit ids past the word list; those print as <id>.
std::string render(const std::vector<int>& ids, const data::Vocabulary& v) {
  std::string s;
  for (int id : ids) {
    if (!s.empty()) s += ' ';
    s += (id >= 0 && id < v.size()) ? v.decode(std::span<const int>(&id, 1)) : "<" + std::to_string(id) + ">";
  }
  return s;
}

int find_token(const model::TokenSeq& seq, int id) {
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq.ids[i] == id) return static_cast<int>(i);
  return -1;
}

}  // namespace

std::string BenchCase::to_json() const {
  ordered_json turns_json = ordered_json::array();
  for (const auto& t : turns) turns_json.push_back({{"speaker", data::to_string(t.speaker)}, {"text", t.text}, {"index", t.index}});
  ordered_json j = {{"kind", bench::to_string(kind)},
                    {"id", id},
                    {"anchor", anchor},
                    {"turns", turns_json},
                    {"prompt", prompt.ids},
                    {"expected", expected},
                    {"context_len", meta.context_len},
                    {"needle_position", meta.needle_position},
                    {"n_repetitions", meta.n_repetitions},
                    {"old_value", meta.old_value},
                    {"new_value", meta.new_value}};
  return j.dump();
}

void finalize_prompt(BenchCase& c, const data::Vocabulary& v) {
  c.prompt = data::encode_prefix(c.anchor, c.turns, v);
  c.prompt.append(v.id("system"), model::Role::Context);
  c.prompt.append(v.id(":"), model::Role::Context);
}

BenchCase gen_inertia_trap(int n_reps, int context_len, std::uint64_t seed) {
  if (n_reps < 1) fail(ErrorCode::InvalidInput, "inertia trap needs at least one repetition");
  const auto& vocab = data::Vocabulary::standard();
  Rng rng(derive_seed(seed, "inertia_trap"));
  const auto& key = vocab.fact_keys()[static_cast<std::size_t>(rng() % vocab.fact_keys().size())];
  const std::string old_value = key.values[static_cast<std::size_t>(rng() % key.values.size())];
  std::string new_value;
  do new_value = key.values[static_cast<std::size_t>(rng() % key.values.size())];
  while (new_value == old_value);

  const std::string rep_user = data::phrase::declare(key.name, old_value);
  const std::string new_user = data::phrase::declare(key.name, new_value);
  const int rep = exchange_tokens(rep_user, data::phrase::ack());
  const int fixed = 1 + rep * (n_reps + 1);
  if (fixed > context_len)
    fail(ErrorCode::InvalidInput, "context_len " + std::to_string(context_len) + " cannot hold " +
                                      std::to_string(n_reps) + " repetitions (needs " + std::to_string(fixed) + ")");

  const std::vector<int> sizes = filler_sizes(context_len - fixed, rng);
  // Repetitions are scattered uniformly among the filler exchanges.
  std::vector<int> order(sizes.size() + static_cast<std::size_t>(n_reps), -1);
  for (std::size_t i = 0; i < sizes.size(); ++i) order[i] = static_cast<int>(i);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);

  BenchCase c;
  c.kind = CaseKind::InertiaTrap;
  for (int slot : order) {
    if (slot < 0) {
      push_exchange(c.turns, rep_user, data::phrase::ack());
    } else {
      auto [u, r] = filler_exchange(sizes[static_cast<std::size_t>(slot)], rng);
      push_exchange(c.turns, u, r);
    }
  }
  push_exchange(c.turns, new_user, data::phrase::ack());
  const model::TokenSeq context = data::encode_prefix("", c.turns, vocab);
  const int L = static_cast<int>(context.size());
  const int pos = static_cast<int>(context.size()) - 1 -
                  static_cast<int>(std::find(context.ids.rbegin(), context.ids.rend(), vocab.id(new_value)) -
                                   context.ids.rbegin());
  if (static_cast<double>(pos) < 0.95 * L)
    fail(ErrorCode::InvalidInput, "context_len " + std::to_string(context_len) +
                                      " too short to place the update inside the final 5%");
  c.turns.push_back({Speaker::User, data::phrase::query(key.name), c.turns.back().index + 1});
  c.expected = {vocab.id(new_value)};
  c.meta = {L, pos, n_reps, old_value, new_value};
  c.id = "inertia_trap-" + std::to_string(seed);
  finalize_prompt(c);
  return c;
}

BenchCase gen_needle(int context_len, std::uint64_t seed) {
  const auto& vocab = data::Vocabulary::standard();
  Rng rng(derive_seed(seed, "needle"));
  const auto& key = vocab.fact_keys()[static_cast<std::size_t>(rng() % vocab.fact_keys().size())];
  const std::string value = key.values[static_cast<std::size_t>(rng() % key.values.size())];
  BenchCase c;
  c.kind = CaseKind::Needle;
  push_exchange(c.turns, data::phrase::declare(key.name, value), data::phrase::ack());
  if (context_len > 0) {
    const int used = 1 + exchange_tokens(c.turns[0].text, c.turns[1].text);
    for (int s : filler_sizes(std::max(context_len - used, 0), rng)) {
      auto [u, r] = filler_exchange(s, rng);
      push_exchange(c.turns, u, r);
    }
  }
  const model::TokenSeq context = data::encode_prefix("", c.turns, vocab);
  c.turns.push_back({Speaker::User, data::phrase::query(key.name), c.turns.back().index + 1});
  c.expected = {vocab.id(value)};
  c.meta.context_len = static_cast<int>(context.size());
  c.meta.needle_position = find_token(context, vocab.id(value));
  c.meta.new_value = value;
  c.id = "needle-" + std::to_string(seed);
  finalize_prompt(c);
  return c;
}

std::vector<BenchCase> gen_pingpong(int n_toggles, std::uint64_t seed) {
  if (n_toggles < 2) fail(ErrorCode::InvalidInput, "ping-pong needs at least two toggles");
  const auto& vocab = data::Vocabulary::standard();
  Rng rng(derive_seed(seed, "pingpong"));
  const std::string key = "diet", base = "vegan";
  const std::vector<std::string> contrary = {"steak", "burger"};
  std::vector<Turn> turns;
  std::vector<BenchCase> cases;
  std::string previous;
  for (int k = 1; k <= n_toggles; ++k) {
    const std::string value = (k % 2 == 1) ? base : contrary[static_cast<std::size_t>((k / 2 - 1) % 2)];
    push_exchange(turns, k == 1 ? data::phrase::declare(key, value) : data::phrase::revise(key, value),
                  data::phrase::ack());
    BenchCase c;
    c.kind = CaseKind::Pingpong;
    c.turns = turns;
    c.turns.push_back({Speaker::User, data::phrase::query(key), turns.back().index + 1});
    c.expected = {vocab.id(value)};
    c.meta.context_len = static_cast<int>(data::encode_prefix("", turns, vocab).size());
    c.meta.n_repetitions = k;
    c.meta.old_value = previous;
    c.meta.new_value = value;
    c.id = "pingpong-" + std::to_string(seed) + "-" + std::to_string(k);
    finalize_prompt(c);
    cases.push_back(std::move(c));
    previous = value;
    // Chit-chat between some toggles so the cases are not pure alternation.
    if (k < n_toggles && rng() % 2 == 0) {
      auto [u, r] = filler_exchange(12 + static_cast<int>(rng() % 7), rng);
      push_exchange(turns, u, r);
    }
  }
  return cases;
}

FloodingCase gen_flooding(int filler_turns, int flood_factor, std::uint64_t seed) {
  if (filler_turns < 0 || flood_factor < 1) fail(ErrorCode::InvalidInput, "bad flooding parameters");
  const auto& vocab = data::Vocabulary::standard();
  Rng rng(derive_seed(seed, "flooding"));
  const auto& digits = vocab.digits();
  const std::string d1 = digits[static_cast<std::size_t>(rng() % digits.size())];
  const std::string d2 = digits[static_cast<std::size_t>(rng() % digits.size())];

  std::vector<std::pair<std::string, std::string>> filler;
  for (int i = 0; i < filler_turns * flood_factor; ++i) filler.push_back(filler_exchange(12 + static_cast<int>(rng() % 7), rng));

  auto build = [&](int n, const char* tag) {
    BenchCase c;
    c.kind = CaseKind::Flooding;
    c.anchor = data::phrase::code_fact(d1, d2);
    for (int i = 0; i < n; ++i) push_exchange(c.turns, filler[static_cast<std::size_t>(i)].first, filler[static_cast<std::size_t>(i)].second);
    const model::TokenSeq context = data::encode_prefix(c.anchor, c.turns, vocab);
    c.turns.push_back({Speaker::User, data::phrase::code_query(), c.turns.empty() ? 1 : c.turns.back().index + 1});
    c.expected = {vocab.id(d1), vocab.id(d2)};
    c.meta.context_len = static_cast<int>(context.size());
    c.meta.needle_position = find_token(context, vocab.id(d1));
    c.meta.n_repetitions = n;
    c.meta.new_value = d1 + " " + d2;
    c.id = std::string("flooding-") + tag + "-" + std::to_string(seed);
    finalize_prompt(c);
    return c;
  };
  return {build(filler_turns, "clean"), build(filler_turns * flood_factor, "flooded")};
}

double BenchReport::accuracy(CaseKind k) const {
  const auto it = by_kind.find(k);
  return it == by_kind.end() ? 0.0 : it->second.accuracy();
}

double BenchReport::overall() const {
  int n = 0, s = 0;
  for (const auto& [k, v] : by_kind) {
    n += v.n;
    s += v.successes;
  }
  return n == 0 ? 0.0 : static_cast<double>(s) / n;
}

bool contains_span(const std::vector<int>& seq, const std::vector<int>& span) {
  if (span.empty()) return true;
  return std::search(seq.begin(), seq.end(), span.begin(), span.end()) != seq.end();
}

BenchReport run_bench(const Decoder& decode, const std::vector<BenchCase>& cases, int threads) {
  if (cases.empty()) fail(ErrorCode::EmptySuite, "benchmark suite is empty");
  std::vector<Transcript> out(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const BenchCase& c = cases[i];
    const model::DecodeResult r = decode(c);
    Transcript& t = out[i];
    t.id = c.id;
    t.kind = c.kind;
    t.expected = c.expected;
    t.decoded = r.tokens;
    t.overflow = r.overflow;
    t.success = !r.overflow && contains_span(r.tokens, c.expected);
  });
  BenchReport report;
  for (auto& t : out) {
    auto& s = report.by_kind[t.kind];
    ++s.n;
    s.successes += t.success ? 1 : 0;
  }
  report.transcripts = std::move(out);
  return report;
}

BenchReport run_bench(const model::TinyModel& m, const std::vector<BenchCase>& cases, int max_new, int threads) {
  const int eos = data::Vocabulary::standard().eos();
  for (const auto& c : cases)
    for (int id : c.prompt.ids)
      if (id >= m.config().vocab_size) fail(ErrorCode::InvalidInput, "case " + c.id + " uses tokens outside the model vocabulary");
  return run_bench([&](const BenchCase& c) { return model::greedy_decode(m, c.prompt, max_new, eos); }, cases,
                   threads);
}

void write_transcripts_jsonl(const BenchReport& r, const std::string& path, const data::Vocabulary& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidInput, "cannot write " + path);
  for (const auto& t : r.transcripts) {
    ordered_json j = {{"id", t.id},
                      {"kind", to_string(t.kind)},
                      {"expected", render(t.expected, v)},
                      {"decoded", render(t.decoded, v)},
                      {"success", t.success},
                      {"overflow", t.overflow}};
    out << j.dump() << '\n';
  }
}

void write_summary_csv(const BenchReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidInput, "cannot write " + path);
  out.precision(10);
  out << "kind,n,accuracy\n";
  for (const auto& [k, s] : r.by_kind) out << to_string(k) << ',' << s.n << ',' << s.accuracy() << '\n';
}

std::vector<BenchCase> make_suite(const std::string& name, std::uint64_t seed, const SuiteOptions& opt) {
  const std::uint64_t root = derive_seed(seed, "bench");
  std::vector<BenchCase> cases;
  const bool all = name == "all";
  if (!all && name != "needle" && name != "inertia" && name != "pingpong" && name != "flooding")
    fail(ErrorCode::InvalidInput, "unknown suite '" + name + "' (needle | inertia | pingpong | flooding | all)");
  for (int i = 0; i < opt.n_cases; ++i) {
    const std::uint64_t s = derive_seed(root, static_cast<std::uint64_t>(i));
    if (all || name == "needle") cases.push_back(gen_needle(opt.needle_context_len, s));
    if (all || name == "inertia") cases.push_back(gen_inertia_trap(opt.trap_reps, opt.trap_context_len, s));
    if (all || name == "flooding") {
      FloodingCase f = gen_flooding(opt.flooding_filler, opt.flooding_factor, s);
      cases.push_back(std::move(f.clean));
      cases.push_back(std::move(f.flooded));
    }
  }
  if (all || name == "pingpong")
    for (auto& c : gen_pingpong(opt.pingpong_toggles, root)) cases.push_back(std::move(c));
  return cases;
}

ShieldCheck check_anchor_shielding(const model::TinyModel& m, const model::TokenSeq& clean,
                                   const model::TokenSeq& flooded) {
  ShieldCheck r;
  r.anchor_len = m.anchor_len_for(clean);
  if (m.anchor_len_for(flooded) != r.anchor_len) fail(ErrorCode::InvalidInput, "anchor zones differ between runs");
  const auto a = model::attention_traces(m, clean);
  const auto b = model::attention_traces(m, flooded);
  const int L = r.anchor_len;
  for (std::size_t layer = 0; layer < a.size(); ++layer) {
    for (const auto* tr : {&a[layer], &b[layer]})
      for (std::size_t h = 0; h < tr->logits.size(); ++h) {
        const auto& lg = tr->logits[h];
        const auto& raw = tr->raw_scores[h];
        for (Eigen::Index j = 0; j < std::min<Eigen::Index>(L, lg.cols()); ++j)
          for (Eigen::Index i = j; i < lg.rows(); ++i)
            if (lg(i, j) != raw(i, j)) r.anchor_columns_unbiased = false;
      }
    for (std::size_t h = 0; h < a[layer].logits.size(); ++h)
      for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
          if (a[layer].logits[h](i, j) != b[layer].logits[h](i, j)) r.anchor_rows_identical = false;
  }
  return r;
}

}  // namespace inertia::bench
