// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dmesr/error.hpp"
#include "dmesr/hash.hpp"
#include "dmesr/semantics.hpp"

namespace dmesr {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string base64(const std::string& in) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t n = (std::uint8_t(in[i]) << 16) | (std::uint8_t(in[i + 1]) << 8) | std::uint8_t(in[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(n >> s) & 63];
  }
  if (i < in.size()) {
    std::uint32_t n = std::uint8_t(in[i]) << 16;
    if (i + 1 < in.size()) n |= std::uint8_t(in[i + 1]) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < in.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string image_data_url(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read image " + path);
  std::ostringstream os;
  os << in.rdbuf();
  std::string mime = "image/jpeg";
  const auto dot = path.rfind('.');
  if (dot != std::string::npos) {
    const auto ext = path.substr(dot + 1);
    if (ext == "png") mime = "image/png";
    else if (ext == "webp") mime = "image/webp";
    else if (ext == "gif") mime = "image/gif";
  }
  return "data:" + mime + ";base64," + base64(os.str());
}

bool transient(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(const std::string& base_url, std::chrono::seconds timeout) : client_(base_url) {
    client_.set_connection_timeout(timeout);
    client_.set_read_timeout(timeout);
    client_.set_write_timeout(timeout);
  }

  HttpResponse post_json(const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& headers) override {
    httplib::Headers h(headers.begin(), headers.end());
    auto res = client_.Post(path, h, body, "application/json");
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  }

 private:
  httplib::Client client_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout) {
  return std::make_unique<HttplibTransport>(base_url, timeout);
}

std::string fetch_description(const DescribeRequest& request, Provider& provider) {
  auto text = provider.describe(request);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ProviderError("empty description", 200);
  return text;
}

std::vector<float> embed_text(const std::string& text, Provider& provider) {
  if (text.empty()) throw Error("cannot embed empty text");
  auto v = provider.embed(text);
  if (v.size() != provider.dimension()) {
    throw Error("embedding has length " + std::to_string(v.size()) + ", expected " +
                std::to_string(provider.dimension()));
  }
  return v;
}

SyntheticProvider::SyntheticProvider(std::uint64_t seed, std::size_t dimension) : seed_(seed), dimension_(dimension) {
  if (dimension == 0) throw Error("embedding dimension must be positive");
}

std::string SyntheticProvider::describe(const DescribeRequest& request) {
  static constexpr const char* kWords[] = {"bright", "quiet",  "classic", "bold",   "warm",    "playful",
                                           "dark",   "gentle", "vivid",   "modern", "intense", "whimsical",
                                           "story",  "scene",  "style",   "mood",   "journey", "palette"};
  std::string key = request.prompt;
  if (request.image_path) key += "\n" + *request.image_path;
  const auto h = fnv1a64(key, fnv1a64(std::to_string(seed_)));
  std::mt19937_64 rng(h);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kWords) - 1);
  std::string out = "Synthetic description " + hex64(h) + ":";
  for (int i = 0; i < 12; ++i) {
    out += ' ';
    out += kWords[pick(rng)];
  }
  out += '.';
  return out;
}

std::vector<float> SyntheticProvider::embed(const std::string& text) {
  std::mt19937_64 rng(fnv1a64(text, fnv1a64(std::to_string(seed_))));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dimension_);
  double sq = 0.0;
  for (auto& x : v) {
    x = normal(rng);
    sq += x * x;
  }
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(dimension_);
  for (std::size_t i = 0; i < dimension_; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

std::string SyntheticProvider::fingerprint() const {
  return "synthetic-s" + std::to_string(seed_) + "-d" + std::to_string(dimension_);
}

RemoteProvider::RemoteProvider(ProviderConfig config, std::unique_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) throw Error("remote provider needs a transport");
  if (config_.retry_budget == 0) throw Error("retry budget must be at least 1");
  if (config_.dimension == 0) throw Error("embedding dimension must be positive");
}

std::string RemoteProvider::fingerprint() const {
  std::ostringstream os;
  os << config_.endpoint << '|' << config_.chat_model << '|' << config_.embedding_model << '|' << config_.dimension;
  if (config_.temperature) os << "|t=" << *config_.temperature;
  if (config_.max_tokens) os << "|m=" << *config_.max_tokens;
  return "remote-" + hex64(fnv1a64(os.str()));
}

std::string RemoteProvider::post_with_retry(const std::string& path, const std::string& body) {
  std::map<std::string, std::string> headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers["Authorization"] = std::string("Bearer ") + key;
  }
  HttpResponse last;
  for (std::size_t attempt = 0; attempt < config_.retry_budget; ++attempt) {
    if (attempt > 0 && config_.backoff.count() > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
    last = transport_->post_json(path, body, headers);
    if (last.status >= 200 && last.status < 300) return last.body;
    if (!transient(last.status)) break;
  }
  throw ProviderError("request to " + path + " failed: " + last.body.substr(0, 200), last.status);
}

std::string RemoteProvider::describe(const DescribeRequest& request) {
  using nlohmann::json;
  json content = json::array({{{"type", "text"}, {"text", request.prompt}}});
  if (request.image_path) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_data_url(*request.image_path)}}}});
  }
  json body = {{"model", config_.chat_model}, {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  if (config_.temperature) body["temperature"] = *config_.temperature;
  if (config_.max_tokens) body["max_tokens"] = *config_.max_tokens;
  const auto reply = post_with_retry("/v1/chat/completions", body.dump());
  try {
    const auto j = json::parse(reply);
    const auto& msg = j.at("choices").at(0).at("message").at("content");
    return msg.is_string() ? msg.get<std::string>() : std::string();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat response: ") + e.what(), 200);
  }
}

std::vector<float> RemoteProvider::embed(const std::string& text) {
  using nlohmann::json;
  const json body = {{"model", config_.embedding_model}, {"input", text}};
  const auto reply = post_with_retry("/v1/embeddings", body.dump());
  std::vector<float> out;
  try {
    const auto j = json::parse(reply);
    for (const auto& x : j.at("data").at(0).at("embedding")) out.push_back(x.get<float>());
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what(), 200);
  }
  if (out.size() != config_.dimension) {
    throw Error("remote embedding has length " + std::to_string(out.size()) + ", expected " +
                std::to_string(config_.dimension));
  }
  return out;
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& config) {
  if (config.kind == ProviderKind::synthetic) return std::make_unique<SyntheticProvider>(config.seed, config.dimension);
  return std::make_unique<RemoteProvider>(config, make_http_transport(config.endpoint, config.timeout));
}

SemanticRecord build_record(const std::string& item, const ItemAttributes& attrs, Route route, Provider& provider) {
  SemanticRecord rec;
  rec.item = item;
  rec.route = route;
  auto need_image = [&]() -> const std::string& {
    if (!attrs.image_path || attrs.image_path->empty()) throw Error("item " + item + " has no image");
    return *attrs.image_path;
  };
  switch (route) {
    case Route::text:
      rec.description = fetch_description({build_text_prompt(attrs), std::nullopt}, provider);
      break;
    case Route::visual:
      rec.description = fetch_description({build_visual_prompt(need_image()), need_image()}, provider);
      break;
    case Route::hybrid:
      rec.description = fetch_description({build_hybrid_prompt(attrs, need_image()), need_image()}, provider);
      break;
    case Route::original_text:
      rec.embedding = embed_text(serialize_original_text(attrs), provider);
      return rec;
  }
  rec.embedding = embed_text(*rec.description, provider);
  return rec;
}

}  // namespace dmesr
