#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace inertia::data {

struct FactKey {
  std::string name;
  std::vector<std::string> values;
};

// The fixed word-level inventory of the synthetic dialogue world. Every word
// the generators emit has an id; anything else maps to <unk>.
class Vocabulary {
 public:
  static const Vocabulary& standard();

  int size() const noexcept { return static_cast<int>(words_.size()); }
  int id(std::string_view word) const;  // <unk> when absent
  bool contains(std::string_view word) const;
  const std::string& word(int id) const;

  // Whitespace-split encoding; decode joins with single spaces.
  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  int pad() const noexcept { return 0; }
  int bos() const noexcept { return 1; }
  int eos() const noexcept { return 2; }
  int unk() const noexcept { return 3; }

  const std::vector<FactKey>& fact_keys() const noexcept { return keys_; }
  const FactKey& fact_key(std::string_view name) const;
  const std::vector<std::string>& digits() const noexcept { return digits_; }
  const std::vector<std::string>& filler() const noexcept { return filler_; }

 private:
  Vocabulary();
  void add(const std::string& w);

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  std::vector<FactKey> keys_;
  std::vector<std::string> digits_;
  std::vector<std::string> filler_;
};

}  // namespace inertia::data
