// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dmesr {

struct ItemAttributes {
  std::vector<std::pair<std::string, std::string>> attributes;  // (name, value), in display order
  std::optional<std::string> image_path;
};

enum class Route : std::uint8_t { text = 0, visual = 1, hybrid = 2, original_text = 3 };

inline constexpr std::array<Route, 4> kAllRoutes = {Route::text, Route::visual, Route::hybrid, Route::original_text};

/// "text", "visual", "hybrid", "orig".
std::string_view route_name(Route route);
Route parse_route(std::string_view name);
/// Comma-separated list of route names.
std::vector<Route> parse_routes(std::string_view list);

struct SemanticRecord {
  std::string item;  // raw item id
  Route route = Route::text;
  std::optional<std::string> description;  // absent for the original-text route
  std::vector<float> embedding;
};

// Prompt construction. All builders are pure.

/// "name1: value1; name2: value2"
std::string enumerate_attributes(const ItemAttributes& attrs);
std::string build_text_prompt(const ItemAttributes& attrs);
std::string build_visual_prompt(const std::string& image_path);
std::string build_hybrid_prompt(const ItemAttributes& attrs, const std::string& image_path);
std::string serialize_original_text(const ItemAttributes& attrs);

/// One generation request; the image travels alongside the prompt when set.
struct DescribeRequest {
  std::string prompt;
  std::optional<std::string> image_path;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string describe(const DescribeRequest& request) = 0;
  virtual std::vector<float> embed(const std::string& text) = 0;
  virtual std::size_t dimension() const = 0;
  /// Identifies the provider configuration; part of every cache key.
  virtual std::string fingerprint() const = 0;
};

/// Validates the provider's answer (non-empty).
std::string fetch_description(const DescribeRequest& request, Provider& provider);
/// Validates the vector length against the provider's dimension.
std::vector<float> embed_text(const std::string& text, Provider& provider);

/// Offline provider: descriptions and unit-norm vectors derived from a hash
/// of the input and the seed.
class SyntheticProvider final : public Provider {
 public:
  SyntheticProvider(std::uint64_t seed, std::size_t dimension);
  std::string describe(const DescribeRequest& request) override;
  std::vector<float> embed(const std::string& text) override;
  std::size_t dimension() const override { return dimension_; }
  std::string fingerprint() const override;

 private:
  std::uint64_t seed_;
  std::size_t dimension_;
};

struct HttpResponse {
  int status = 0;  // 0 when no response arrived
  std::string body;
};

/// Seam between the remote provider and the network.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                 const std::map<std::string, std::string>& headers) = 0;
};

/// cpp-httplib client bound to one base URL (http:// or https://).
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout);

enum class ProviderKind { synthetic, remote };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::synthetic;
  std::size_t dimension = 1536;
  std::uint64_t seed = 42;

  // Remote only. Speaks the OpenAI-compatible chat and embeddings API.
  std::string endpoint = "http://localhost:8000";
  std::string chat_model;
  std::string embedding_model;
  std::string api_key_env = "DMESR_API_KEY";
  std::chrono::seconds timeout{60};
  std::size_t retry_budget = 3;  // total attempts per request
  std::chrono::milliseconds backoff{500};
  std::optional<double> temperature;
  std::optional<std::size_t> max_tokens;
};

class RemoteProvider final : public Provider {
 public:
  RemoteProvider(ProviderConfig config, std::unique_ptr<HttpTransport> transport);
  std::string describe(const DescribeRequest& request) override;
  std::vector<float> embed(const std::string& text) override;
  std::size_t dimension() const override { return config_.dimension; }
  std::string fingerprint() const override;

 private:
  std::string post_with_retry(const std::string& path, const std::string& body);

  ProviderConfig config_;
  std::unique_ptr<HttpTransport> transport_;
};

std::unique_ptr<Provider> make_provider(const ProviderConfig& config);

/// Runs one route for one item: prompt, describe and embed, or embed the
/// serialized attributes directly for the original-text route.
SemanticRecord build_record(const std::string& item, const ItemAttributes& attrs, Route route, Provider& provider);

/// Item metadata in JSON Lines: {"item": id, "image": path, "attributes": [[name, value], ...]}.
std::map<std::string, ItemAttributes> load_item_catalog(const std::string& path);
/// True when the item has at least one attribute and an image path.
bool has_all_assets(const ItemAttributes& attrs);

/// On-disk record store, one file per (item, route) under
/// root/<dataset>/<fingerprint>/<route>/.
class EmbeddingCache {
 public:
  EmbeddingCache(std::string root, std::string dataset, std::string fingerprint, std::size_t dimension);

  void put(const SemanticRecord& record) const;
  /// nullopt when no record exists; throws CorruptRecord when one exists but
  /// fails validation.
  std::optional<SemanticRecord> get(const std::string& item, Route route) const;
  bool contains(const std::string& item, Route route) const;

  std::string record_path(const std::string& item, Route route) const;
  std::size_t dimension() const { return dimension_; }
  const std::string& fingerprint() const { return fingerprint_; }

  static constexpr std::uint8_t kFormatVersion = 1;

 private:
  std::string dir_;
  std::string fingerprint_;
  std::size_t dimension_;
};

struct StructuredEmbeddingConfig {
  std::size_t clusters = 2;
  double noise = 0.1;
  // Fraction of the noise variance shared by the four routes of an item.
  // 0 gives independent per-route noise.
  double shared_noise = 0.0;
  // Scale of the noise on the three description routes relative to the
  // original-text route. Below 1 the descriptions keep the cluster but lose
  // part of what tells items apart.
  double description_detail = 1.0;
  std::size_t dimension = 64;
  std::uint64_t seed = 42;
};

/// Item k joins cluster k % clusters. Each route vector is the normalised
/// sum of the cluster centroid and scaled Gaussian noise.
std::vector<SemanticRecord> synthesize_structured_embeddings(std::span<const std::string> items,
                                                             const StructuredEmbeddingConfig& config);
std::string structured_fingerprint(const StructuredEmbeddingConfig& config);

}  // namespace dmesr
