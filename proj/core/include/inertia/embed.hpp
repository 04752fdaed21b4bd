#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace inertia::embed {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  double norm() const;
};

enum class ProviderKind { HashedBag, ExternalService };

struct ProviderSpec {
  ProviderKind kind = ProviderKind::HashedBag;
  std::size_t dim = 64;
  std::string endpoint;  // external-service only
  std::uint64_t seed = 0;
  double timeout_s = 10.0;
  int retries = 2;

  // hashed-bag must not carry an endpoint; external-service must.
  void validate() const;

  bool operator==(const ProviderSpec&) const = default;
};

// Lowercase, split on non-alphanumerics.
std::vector<std::string> tokenize(std::string_view text);

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed(std::string_view text) const = 0;
  virtual std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) const;
};

// Seeded feature-hashing bag of tokens. Each token lands in one bucket with a
// sign taken from the top bit of its hash; the count vector is L2-normalized.
class HashedBagProvider final : public Provider {
 public:
  HashedBagProvider(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  Embedding embed(std::string_view text) const override;

  // Raw (unnormalized) signed bucket counts.
  std::vector<double> bucket_counts(std::string_view text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_mix_;
};

// POST {"texts": [...]} -> {"embeddings": [[...], ...]}; bearer token from
// EMBED_API_KEY when set.
class ServiceProvider final : public Provider {
 public:
  explicit ServiceProvider(ProviderSpec spec);

  std::size_t dim() const override { return spec_.dim; }
  Embedding embed(std::string_view text) const override;
  std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) const override;

 private:
  ProviderSpec spec_;
  std::string api_key_;
};

std::unique_ptr<Provider> make_provider(const ProviderSpec& spec);

Embedding embed_text(const Provider& provider, std::string_view text);
Embedding embed_text(const ProviderSpec& spec, std::string_view text);

// dot(a,b)/(|a||b|) clamped to [-1, 1].
double cosine_similarity(const Embedding& a, const Embedding& b);

}  // namespace inertia::embed
