#include "inertia/judge.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "inertia/error.hpp"
#include "inertia/http.hpp"
#include "inertia/rng.hpp"

namespace inertia::bench {

using nlohmann::json;

const char* to_string(Winner w) {
  switch (w) {
    case Winner::A: return "A";
    case Winner::B: return "B";
    case Winner::Tie: return "Tie";
  }
  return "?";
}

const char* const kJudgeSystemPrompt =
    "You are a fair and neutral judge. Your job is to compare two AI assistant responses.";

JudgeMessages render_judge_prompt(const std::string& question, const std::string& shown_a,
                                  const std::string& shown_b) {
  std::string u;
  u += "Compare the two AI assistant responses to the user question shown below and decide which assistant "
       "follows the user's instructions and answers the question better.\n";
  u += "Judge on usefulness, relevance, accuracy, depth, creativity, and level of detail.\n\n";
  u += "[User Question]\n" + question + "\n\n";
  u += "[Assistant A]\n" + shown_a + "\n\n";
  u += "[Assistant B]\n" + shown_b + "\n\n";
  u += "Reply with strict JSON only, an object with exactly two keys: \"reason\" and \"winner\". "
       "\"winner\" must be one of \"A\", \"B\", or \"Tie\".";
  return {kJudgeSystemPrompt, u};
}

RawVerdict parse_judge_reply(const std::string& reply) {
  json j;
  try {
    j = json::parse(reply);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("judge reply is not JSON: ") + e.what(), reply);
  }
  if (!j.is_object() || j.size() != 2 || !j.contains("reason") || !j.contains("winner") ||
      !j["reason"].is_string() || !j["winner"].is_string())
    throw Error(ErrorCode::ParseFailure, "judge reply must be {\"reason\": string, \"winner\": string}", reply);
  const std::string w = j["winner"].get<std::string>();
  RawVerdict v;
  v.reason = j["reason"].get<std::string>();
  if (w == "A") v.winner = Winner::A;
  else if (w == "B") v.winner = Winner::B;
  else if (w == "Tie") v.winner = Winner::Tie;
  else throw Error(ErrorCode::ParseFailure, "judge winner '" + w + "' is not A, B or Tie", reply);
  return v;
}

bool judge_coin(std::uint64_t seed) { return (derive_seed(seed, "judge") >> 63) != 0; }

Winner unflip(Winner shown, bool flipped) {
  if (!flipped || shown == Winner::Tie) return shown;
  return shown == Winner::A ? Winner::B : Winner::A;
}

void JudgeConfig::validate() const {
  if (endpoint.empty()) fail(ErrorCode::InvalidConfig, "judge endpoint not configured");
  if (model.empty()) fail(ErrorCode::InvalidConfig, "judge model not configured");
  if (max_in_flight < 1) fail(ErrorCode::InvalidConfig, "judge max_in_flight must be >= 1");
  if (!(timeout_s > 0.0)) fail(ErrorCode::InvalidConfig, "judge timeout must be positive");
}

JudgeTransport http_judge_transport(const JudgeConfig& cfg) {
  cfg.validate();
  const char* key = std::getenv("JUDGE_API_KEY");
  if (!key || !*key) fail(ErrorCode::InvalidConfig, "JUDGE_API_KEY is not set");
  const std::string token = key;
  return [cfg, token](const JudgeMessages& m) {
    const json body = {{"model", cfg.model},
                       {"temperature", 0},
                       {"messages", {{{"role", "system"}, {"content", m.system}}, {{"role", "user"}, {"content", m.user}}}}};
    const http::Response r =
        http::post_json(cfg.endpoint, body.dump(), {{"Authorization", "Bearer " + token}}, cfg.timeout_s, cfg.retries);
    try {
      return json::parse(r.body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ProviderUnavailable, std::string("malformed chat-completions response: ") + e.what(),
                  r.body);
    }
  };
}

struct JudgeClient::Gate {
  std::mutex mu;
  std::condition_variable cv;
  int in_flight = 0;
  int peak = 0;
};

JudgeClient::JudgeClient(JudgeConfig cfg, JudgeTransport transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), gate_(std::make_shared<Gate>()) {
  if (cfg_.max_in_flight < 1) fail(ErrorCode::InvalidConfig, "judge max_in_flight must be >= 1");
  if (!transport_) fail(ErrorCode::InvalidConfig, "judge transport missing");
}

JudgeVerdict JudgeClient::judge_pairwise(const std::string& question, const std::string& answer_a,
                                         const std::string& answer_b, std::uint64_t seed,
                                         std::optional<bool> flip_override) const {
  const bool flipped = flip_override.value_or(judge_coin(seed));
  const JudgeMessages msgs =
      flipped ? render_judge_prompt(question, answer_b, answer_a) : render_judge_prompt(question, answer_a, answer_b);
  std::string reply;
  {
    std::unique_lock lock(gate_->mu);
    gate_->cv.wait(lock, [&] { return gate_->in_flight < cfg_.max_in_flight; });
    ++gate_->in_flight;
    gate_->peak = std::max(gate_->peak, gate_->in_flight);
  }
  struct Release {
    Gate& g;
    ~Release() {
      {
        std::lock_guard lock(g.mu);
        --g.in_flight;
      }
      g.cv.notify_one();
    }
  } release{*gate_};
  reply = transport_(msgs);
  const RawVerdict raw = parse_judge_reply(reply);
  return {unflip(raw.winner, flipped), raw.reason, flipped};
}

std::vector<JudgeVerdict> JudgeClient::judge_many(const std::vector<Item>& items, std::uint64_t seed) const {
  std::vector<JudgeVerdict> out(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::vector<std::thread> workers;
  workers.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    workers.emplace_back([&, i] {
      try {
        out[i] = judge_pairwise(items[i].question, items[i].answer_a, items[i].answer_b,
                                derive_seed(seed, static_cast<std::uint64_t>(i)));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

int JudgeClient::peak_in_flight() const {
  std::lock_guard lock(gate_->mu);
  return gate_->peak;
}

}  // namespace inertia::bench
