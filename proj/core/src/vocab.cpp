#include "inertia/vocab.hpp"

#include <sstream>

#include "inertia/error.hpp"

namespace inertia::data {

Vocabulary::Vocabulary() {
  for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>", "user", "system", "anchor", ":", ".", "?", ","})
    add(w);
  for (const char* w : {"set", "what", "noted", "actually", "now", "code", "ok", "sure", "that", "sounds", "nice",
                        "good", "to", "know", "tell", "me", "about", "it", "fun"})
    add(w);
  keys_ = {
      {"diet", {"vegan", "steak", "burger", "meat", "fish", "salad"}},
      {"city", {"paris", "tokyo", "lima", "oslo", "cairo", "delhi"}},
      {"pet", {"cat", "dog", "parrot", "hamster", "turtle", "rabbit"}},
      {"color", {"red", "blue", "green", "yellow", "purple", "orange"}},
      {"drink", {"tea", "coffee", "juice", "water", "milk", "soda"}},
      {"sport", {"tennis", "soccer", "chess", "rowing", "boxing", "skiing"}},
      {"music", {"jazz", "rock", "opera", "techno", "blues", "reggae"}},
      {"job", {"nurse", "pilot", "chef", "farmer", "lawyer", "teacher"}},
  };
  for (const auto& k : keys_) {
    add(k.name);
    for (const auto& v : k.values) add(v);
  }
  for (int d = 0; d < 10; ++d) {
    digits_.push_back("n" + std::to_string(d));
    add(digits_.back());
  }
  filler_ = {"i",       "went",    "walking", "in",     "a",       "park",    "today",   "weather", "was",
             "sunny",   "we",      "saw",     "movie",  "last",    "night",   "friend",  "called", "they",
             "read",    "book",    "cooked",  "dinner", "with",    "family",  "rain",    "started", "train",
             "late",    "again",   "bought",  "shoes",  "market",  "busy",    "slept",   "early",  "played",
             "game",    "online",  "painted", "wall",   "garden",  "flowers", "bloomed", "visited", "museum",
             "cleaned", "kitchen", "watched", "news",   "fixed",   "bike",    "lunch",   "office", "meeting",
             "ran",     "lake",    "wrote",   "letter", "planted", "tree"};
  for (const auto& w : filler_) add(w);
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v;
  return v;
}

void Vocabulary::add(const std::string& w) {
  if (index_.count(w)) fail(ErrorCode::InvalidConfig, "duplicate vocabulary word '" + w + "'");
  index_.emplace(w, static_cast<int>(words_.size()));
  words_.push_back(w);
}

int Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? unk() : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) fail(ErrorCode::InvalidInput, "token id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

const FactKey& Vocabulary::fact_key(std::string_view name) const {
  for (const auto& k : keys_)
    if (k.name == name) return k;
  fail(ErrorCode::InvalidInput, "unknown fact key '" + std::string(name) + "'");
}

}  // namespace inertia::data
