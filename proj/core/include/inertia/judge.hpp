#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace inertia::bench {

enum class Winner { A, B, Tie };
const char* to_string(Winner w);

// Verdict in the caller's identities: A always means answer_a.
struct JudgeVerdict {
  Winner winner = Winner::Tie;
  std::string reason;
  bool order_flipped = false;  // answer_b was shown as Assistant A
};

struct JudgeMessages {
  std::string system;
  std::string user;
};

extern const char* const kJudgeSystemPrompt;

// The pairwise prompt: task, criteria, the three slots, output requirement.
JudgeMessages render_judge_prompt(const std::string& question, const std::string& shown_a,
                                  const std::string& shown_b);

// Strict parse of {"reason": string, "winner": "A" | "B" | "Tie"}; anything
// else throws ParseFailure carrying the raw reply as payload.
struct RawVerdict {
  Winner winner = Winner::Tie;
  std::string reason;
};
RawVerdict parse_judge_reply(const std::string& reply);

// Fair coin derived from the call seed.
bool judge_coin(std::uint64_t seed);

// Maps a verdict on the shown order back to the original answers.
Winner unflip(Winner shown, bool flipped);

struct JudgeConfig {
  std::string endpoint;  // chat-completions URL
  std::string model;
  double timeout_s = 60.0;
  int retries = 1;
  int max_in_flight = 4;

  void validate() const;

  bool operator==(const JudgeConfig&) const = default;
};

// Returns the assistant message content for (system, user).
using JudgeTransport = std::function<std::string(const JudgeMessages&)>;

// Chat-completions HTTP transport; bearer token from JUDGE_API_KEY.
JudgeTransport http_judge_transport(const JudgeConfig& cfg);

class JudgeClient {
 public:
  JudgeClient(JudgeConfig cfg, JudgeTransport transport);

  // flip_override forces the presentation order (tests).
  JudgeVerdict judge_pairwise(const std::string& question, const std::string& answer_a, const std::string& answer_b,
                              std::uint64_t seed, std::optional<bool> flip_override = std::nullopt) const;

  struct Item {
    std::string question;
    std::string answer_a;
    std::string answer_b;
  };
  // Runs items concurrently with at most max_in_flight outstanding calls.
  std::vector<JudgeVerdict> judge_many(const std::vector<Item>& items, std::uint64_t seed) const;

  int peak_in_flight() const;

 private:
  struct Gate;
  JudgeConfig cfg_;
  JudgeTransport transport_;
  std::shared_ptr<Gate> gate_;
};

}  // namespace inertia::bench
