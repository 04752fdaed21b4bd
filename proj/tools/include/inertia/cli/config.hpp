#pragma once

#include <cstdint>
#include <string>

#include "inertia/align.hpp"
#include "inertia/attn_bias.hpp"
#include "inertia/bench.hpp"
#include "inertia/datagen.hpp"
#include "inertia/embed.hpp"
#include "inertia/judge.hpp"
#include "inertia/model.hpp"
#include "inertia/schedule.hpp"

namespace inertia::cli {

// Language-model warm-up on synthetic dialogues before preference training.
struct WarmupConfig {
  int dialogues = 6000;
  align::PretrainSettings settings;

  bool operator==(const WarmupConfig&) const = default;
};

struct DataConfig {
  data::CorpusSpec corpus;
  data::DataFilters filters;

  bool operator==(const DataConfig&) const = default;
};

struct ProvidersConfig {
  embed::ProviderSpec embedding;
  bench::JudgeConfig judge;

  bool operator==(const ProvidersConfig&) const = default;
};

// Every section is optional in the file; missing keys keep their defaults and
// unknown keys are rejected. The root seed feeds every named sub-stream.
struct RunConfig {
  std::uint64_t seed = 0;
  schedule::ScheduleParams schedule;
  attn::BiasConfig bias;
  model::ModelConfig model;
  align::TrainSettings train;
  WarmupConfig warmup;
  DataConfig data;
  bench::SuiteOptions bench;
  ProvidersConfig providers;
  std::string output_dir = "runs";

  // Cross-field checks; throws InvalidConfig.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string dump_config(const RunConfig& cfg);  // pretty JSON, every key present

// Bias settings for a variant name; matb gets one head entry per model head
// when the config carries none.
attn::BiasConfig bias_for(const RunConfig& cfg, const std::string& variant);

}  // namespace inertia::cli
