#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inertia/align.hpp"
#include "inertia/embed.hpp"
#include "inertia/vocab.hpp"

namespace inertia::data {

enum class Speaker { User, System };
const char* to_string(Speaker s);

// One utterance. A user turn and the system reply to it share an index
// (one exchange), so indices count exchanges 1..E.
struct Turn {
  Speaker speaker = Speaker::User;
  std::string text;
  int index = 1;
};

struct FactFlip {
  int turn = 0;  // exchange carrying the new value
  std::string key;
  std::string old_value;
  std::string new_value;

  bool operator==(const FactFlip&) const = default;
};

struct CorpusSpec {
  int n_dialogues = 200;
  int turns_per_dialogue = 12;   // exchanges
  std::vector<FactFlip> flips;   // applied to every dialogue
  int random_flips = 2;          // extra per-dialogue flips at random turns
  double anchor_prob = 0.5;      // chance a dialogue opens with an anchored code
  int filler_min = 3;            // words per chit-chat utterance
  int filler_max = 7;
  std::uint64_t seed = 0;

  void validate() const;

  bool operator==(const CorpusSpec&) const = default;
};

struct Dialogue {
  std::string anchor;  // system-prompt text; empty when absent
  std::vector<Turn> turns;
  std::vector<FactFlip> flips;  // ground-truth annotations

  int exchanges() const;
  const Turn& user(int index) const;
  const Turn& system(int index) const;
};

std::vector<Dialogue> synth_corpus(const CorpusSpec& spec);

// Scans user declarations ("<key> <value>") and reports every change
// of a key's value. Independent of the generator's annotations.
struct Contradiction {
  std::string key;
  std::string old_value;
  std::string new_value;
  int old_turn = 0;
  int new_turn = 0;
};
std::vector<Contradiction> find_contradictions(const Dialogue& d);

struct PreferencePair {
  std::string anchor;
  std::vector<Turn> context;  // history through the user turn at t
  std::string chosen;
  std::string rejected;
  int t = 1;
  int T = 1;
  double sim = 0.0;        // cosine(chosen, rejected); set by filter_similarity
  double len_ratio = 1.0;  // max/min whitespace token count
  int gap = 0;             // t minus the rejected response's exchange
  double conflict = 0.0;   // max cosine of u_T against earlier user turns
  bool has_history = true;
};

struct BuildResult {
  std::vector<PreferencePair> pairs;
  int skipped_dialogues = 0;
};

// Pairs at every exchange t > gap_min; the rejected reply is drawn uniformly
// from the system turns at exchanges <= t - gap_min. Dialogues with at most
// gap_min exchanges are skipped.
BuildResult build_pairs(const std::vector<Dialogue>& corpus, const embed::Provider& provider, int gap_min = 5,
                        std::uint64_t seed = 0);

struct FilterResult {
  std::vector<PreferencePair> kept;
  std::vector<PreferencePair> discarded;
  int degenerate = 0;  // discarded because a response has no embedding
};

// Discards pairs whose chosen/rejected cosine is strictly above threshold, or
// cannot be computed because a response embeds to the zero vector.
FilterResult filter_similarity(const std::vector<PreferencePair>& pairs, const embed::Provider& provider,
                               double threshold = 0.5, int threads = 1);

int whitespace_tokens(const std::string& s);
double length_ratio(const std::string& a, const std::string& b);

// Discards pairs whose length ratio is strictly above max_ratio.
FilterResult filter_length(const std::vector<PreferencePair>& pairs, double max_ratio = 4.0);

struct DataFilters {
  int gap_min = 5;
  double sim_threshold = 0.5;
  double max_len_ratio = 4.0;

  bool operator==(const DataFilters&) const = default;
};

struct Audit {
  int dialogues = 0;
  int skipped_dialogues = 0;
  int generated = 0;
  int sim_kept = 0;
  int sim_discarded = 0;
  int sim_degenerate = 0;  // included in sim_discarded
  int len_kept = 0;
  int len_discarded = 0;
  int final_pairs = 0;

  std::string to_json() const;
};

struct PipelineResult {
  std::vector<Dialogue> corpus;
  std::vector<PreferencePair> pairs;
  Audit audit;
};

PipelineResult run_pipeline(const CorpusSpec& spec, const embed::Provider& provider, const DataFilters& filters,
                            int threads = 1);

// Every invariant violation, one message each; empty means valid.
std::vector<std::string> validate_pairs(const std::vector<PreferencePair>& pairs, const DataFilters& filters);

void write_pairs_jsonl(const std::vector<PreferencePair>& pairs, const std::string& path);
std::vector<PreferencePair> read_pairs_jsonl(const std::string& path);
std::string to_jsonl_line(const PreferencePair& p);

// Token-space views used by the model.
model::TokenSeq encode_prefix(const std::string& anchor, const std::vector<Turn>& turns, const Vocabulary& v);
model::TokenSeq encode_response(const std::string& text, const Vocabulary& v);
align::TokenPair to_token_pair(const PreferencePair& p, const Vocabulary& v);
std::vector<align::TokenPair> to_token_pairs(const std::vector<PreferencePair>& pairs, const Vocabulary& v);

// Whole dialogue as one language-modelling sequence.
model::TokenSeq dialogue_tokens(const Dialogue& d, const Vocabulary& v);

// Warm-up example that trains only the system replies (text and <eos>);
// user filler is unpredictable noise and would dominate the loss otherwise.
align::LmExample reply_example(const Dialogue& d, const Vocabulary& v);
std::vector<align::LmExample> warmup_examples(const CorpusSpec& spec, const Vocabulary& v);

// Utterance templates shared with the benchmark generators.
namespace phrase {
std::string declare(const std::string& key, const std::string& value);
std::string revise(const std::string& key, const std::string& value);
std::string ack();
std::string query(const std::string& key);
std::string answer(const std::string& key, const std::string& value);
std::string code_fact(const std::string& d1, const std::string& d2);
std::string code_query();
}  // namespace phrase

}  // namespace inertia::data
