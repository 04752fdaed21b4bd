#include "inertia/embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include <json.hpp>

#include "inertia/error.hpp"
#include "inertia/http.hpp"
#include "inertia/rng.hpp"

namespace inertia::embed {

namespace {

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

Embedding normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (!(sq > 0.0)) fail(ErrorCode::InvalidInput, "text embeds to the zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : values) v *= inv;
  return Embedding{std::move(values)};
}

}  // namespace

double Embedding::norm() const {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return std::sqrt(sq);
}

void ProviderSpec::validate() const {
  if (dim == 0) fail(ErrorCode::InvalidConfig, "embedding dim must be positive");
  if (kind == ProviderKind::HashedBag && !endpoint.empty())
    fail(ErrorCode::InvalidConfig, "hashed-bag provider takes no endpoint");
  if (kind == ProviderKind::ExternalService && endpoint.empty())
    fail(ErrorCode::InvalidConfig, "external-service provider requires an endpoint");
  if (!(timeout_s > 0.0)) fail(ErrorCode::InvalidConfig, "timeout must be positive");
  if (retries < 0) fail(ErrorCode::InvalidConfig, "retries must be non-negative");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<Embedding> Provider::embed_batch(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

HashedBagProvider::HashedBagProvider(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_mix_(splitmix64(seed)) {
  if (dim == 0) fail(ErrorCode::InvalidConfig, "embedding dim must be positive");
}

std::vector<double> HashedBagProvider::bucket_counts(std::string_view text) const {
  std::vector<double> counts(dim_, 0.0);
  for (const auto& token : tokenize(text)) {
    const std::uint64_t h = splitmix64(fnv1a64(token) ^ seed_mix_);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    counts[h % dim_] += sign;
  }
  return counts;
}

Embedding HashedBagProvider::embed(std::string_view text) const {
  if (is_blank(text)) fail(ErrorCode::InvalidInput, "cannot embed empty text");
  return normalized(bucket_counts(text));
}

ServiceProvider::ServiceProvider(ProviderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (const char* key = std::getenv("EMBED_API_KEY")) api_key_ = key;
}

Embedding ServiceProvider::embed(std::string_view text) const {
  auto batch = embed_batch({std::string(text)});
  return std::move(batch.front());
}

std::vector<Embedding> ServiceProvider::embed_batch(const std::vector<std::string>& texts) const {
  for (const auto& t : texts)
    if (is_blank(t)) fail(ErrorCode::InvalidInput, "cannot embed empty text");

  http::Headers headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
  const nlohmann::json request = {{"texts", texts}};
  const auto response =
      http::post_json(spec_.endpoint, request.dump(), headers, spec_.timeout_s, spec_.retries);

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(response.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable,
                std::string("embedding service returned invalid JSON: ") + e.what(), response.body);
  }
  if (!parsed.contains("embeddings") || !parsed["embeddings"].is_array() ||
      parsed["embeddings"].size() != texts.size())
    throw Error(ErrorCode::ProviderUnavailable, "embedding service response lacks embeddings",
                response.body);

  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& row : parsed["embeddings"]) {
    std::vector<double> values = row.get<std::vector<double>>();
    if (values.size() != spec_.dim)
      fail(ErrorCode::ProviderUnavailable, "embedding service returned dim " +
                                               std::to_string(values.size()) + ", expected " +
                                               std::to_string(spec_.dim));
    out.push_back(normalized(std::move(values)));
  }
  return out;
}

std::unique_ptr<Provider> make_provider(const ProviderSpec& spec) {
  spec.validate();
  if (spec.kind == ProviderKind::HashedBag)
    return std::make_unique<HashedBagProvider>(spec.dim, spec.seed);
  return std::make_unique<ServiceProvider>(spec);
}

Embedding embed_text(const Provider& provider, std::string_view text) { return provider.embed(text); }

Embedding embed_text(const ProviderSpec& spec, std::string_view text) {
  return make_provider(spec)->embed(text);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim())
    fail(ErrorCode::InvalidInput, "dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                                      std::to_string(b.dim()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) fail(ErrorCode::InvalidInput, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace inertia::embed
