#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "inertia/datagen.hpp"
#include "inertia/model.hpp"

namespace inertia::bench {

enum class CaseKind { Needle, InertiaTrap, Pingpong, Flooding };
const char* to_string(CaseKind k);
CaseKind parse_case_kind(const std::string& name);

struct CaseMeta {
  int context_len = 0;        // prompt tokens before the final query
  int needle_position = -1;   // token index of the planted value
  int n_repetitions = 0;
  std::string old_value;
  std::string new_value;
};

struct BenchCase {
  CaseKind kind = CaseKind::Needle;
  std::string id;
  std::string anchor;
  std::vector<data::Turn> turns;  // dialogue ending with the query turn
  model::TokenSeq prompt;         // encoded turns followed by "system :"
  std::vector<int> expected;      // answer span
  CaseMeta meta;

  std::string to_json() const;  // stable serialization (determinism checks)
};

// Encodes the dialogue turns into the prompt.
void finalize_prompt(BenchCase& c, const data::Vocabulary& v = data::Vocabulary::standard());

// VAR <- old repeated n_reps times over the first 95% of the context, one
// VAR <- new inside the final 5%, then a query for VAR. context_len counts the
// tokens before the query. Throws InvalidInput when the length cannot hold
// the assignments.
BenchCase gen_inertia_trap(int n_reps, int context_len, std::uint64_t seed);

// A fact in the first turn, non-conflicting chit-chat after it, then a query.
// context_len <= 0 disables the filler.
BenchCase gen_needle(int context_len, std::uint64_t seed);

// Alternating declarations A, not-A, A, ... on one key; one case per turn,
// each asking for the latest value. The contrary values cycle.
std::vector<BenchCase> gen_pingpong(int n_toggles, std::uint64_t seed);

// An anchored code followed by chit-chat and a code query; `flooded` carries
// the same dialogue with flood_factor times the chit-chat.
struct FloodingCase {
  BenchCase clean;
  BenchCase flooded;
};
FloodingCase gen_flooding(int filler_turns, int flood_factor, std::uint64_t seed);

struct Transcript {
  std::string id;
  CaseKind kind = CaseKind::Needle;
  std::vector<int> expected;
  std::vector<int> decoded;
  bool success = false;
  bool overflow = false;
};

struct KindSummary {
  int n = 0;
  int successes = 0;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(successes) / n; }
};

struct BenchReport {
  std::map<CaseKind, KindSummary> by_kind;
  std::vector<Transcript> transcripts;

  double accuracy(CaseKind k) const;
  double overall() const;
};

// Contiguous containment of `span` in `seq`.
bool contains_span(const std::vector<int>& seq, const std::vector<int>& span);

using Decoder = std::function<model::DecodeResult(const BenchCase&)>;

// Greedy decode of at most max_new tokens, stopping at <eos>; success when the
// expected span appears in the decode. Throws EmptySuite on no cases.
BenchReport run_bench(const model::TinyModel& m, const std::vector<BenchCase>& cases, int max_new = 8,
                      int threads = 1);
BenchReport run_bench(const Decoder& decode, const std::vector<BenchCase>& cases, int threads = 1);

void write_transcripts_jsonl(const BenchReport& r, const std::string& path,
                             const data::Vocabulary& v = data::Vocabulary::standard());
void write_summary_csv(const BenchReport& r, const std::string& path);

// Named suites for the CLI: needle | inertia | pingpong | flooding | all.
struct SuiteOptions {
  int n_cases = 20;
  int trap_reps = 8;
  int trap_context_len = 160;
  int needle_context_len = 120;
  int pingpong_toggles = 5;
  int flooding_filler = 2;
  int flooding_factor = 4;

  bool operator==(const SuiteOptions&) const = default;
};
std::vector<BenchCase> make_suite(const std::string& name, std::uint64_t seed, const SuiteOptions& opt = {});

// True when every pre-softmax logit in the anchor columns equals the raw
// score (zero bias) and every anchor-row logit matches between the two runs.
struct ShieldCheck {
  bool anchor_columns_unbiased = true;
  bool anchor_rows_identical = true;
  int anchor_len = 0;
};
ShieldCheck check_anchor_shielding(const model::TinyModel& m, const model::TokenSeq& clean,
                                   const model::TokenSeq& flooded);

}  // namespace inertia::bench
