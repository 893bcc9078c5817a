// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "dmesr/error.hpp"
#include "dmesr/hash.hpp"
#include "dmesr/semantics.hpp"

namespace dmesr {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'D', 'M', 'S', 'R'};

// Raw ids can contain anything; keep file names portable.
std::string file_stem(const std::string& item) {
  std::string out;
  for (unsigned char c : item) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out += static_cast<char>(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  if (out.empty() || out == "." || out == "..") out = "%" + out;
  return out;
}

bool safe_component(const std::string& s) {
  return !s.empty() && s != "." && s != ".." && s.find('/') == std::string::npos &&
         s.find('\\') == std::string::npos;
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::string root, std::string dataset, std::string fingerprint, std::size_t dimension)
    : fingerprint_(std::move(fingerprint)), dimension_(dimension) {
  if (!safe_component(dataset)) throw Error("invalid dataset name '" + dataset + "'");
  if (!safe_component(fingerprint_)) throw Error("invalid provider fingerprint '" + fingerprint_ + "'");
  if (dimension_ == 0) throw Error("embedding dimension must be positive");
  dir_ = (fs::path(root) / dataset / fingerprint_).string();
}

std::string EmbeddingCache::record_path(const std::string& item, Route route) const {
  return (fs::path(dir_) / std::string(route_name(route)) / (file_stem(item) + ".vec")).string();
}

bool EmbeddingCache::contains(const std::string& item, Route route) const {
  return fs::exists(record_path(item, route));
}

void EmbeddingCache::put(const SemanticRecord& record) const {
  if (record.embedding.size() != dimension_) {
    throw Error("record for item " + record.item + " has dimension " + std::to_string(record.embedding.size()) +
                ", cache expects " + std::to_string(dimension_));
  }
  const auto path = record_path(record.item, record.route);
  // Sidecar first: a record file only appears once its description exists.
  const auto sidecar = fs::path(path).replace_extension(".txt").string();
  if (record.description) io::write_text_atomic(sidecar, *record.description);

  io::Writer w;
  w.raw(kMagic, 4);
  w.u8(kFormatVersion);
  w.str(record.item);
  w.u8(static_cast<std::uint8_t>(record.route));
  w.u8(record.description ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(dimension_));
  io::Writer payload;
  for (float x : record.embedding) payload.f32(x);
  std::vector<std::uint8_t> summed = w.bytes();
  summed.insert(summed.end(), payload.bytes().begin(), payload.bytes().end());
  w.u32(fnv1a32(summed));
  w.raw(payload.bytes().data(), payload.bytes().size());
  io::write_file_atomic(path, w.bytes());
}

std::optional<SemanticRecord> EmbeddingCache::get(const std::string& item, Route route) const {
  const auto path = record_path(item, route);
  if (!fs::exists(path)) return std::nullopt;
  const auto bytes = io::read_file(path);
  io::Reader r(bytes.data(), bytes.size(), path);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (!std::equal(magic, magic + 4, kMagic)) throw CorruptRecord(path + ": bad magic");
  if (const auto v = r.u8(); v != kFormatVersion) {
    throw CorruptRecord(path + ": unsupported format version " + std::to_string(v));
  }
  SemanticRecord rec;
  rec.item = r.str();
  const auto route_tag = r.u8();
  const bool has_description = r.u8() != 0;
  const auto dim = r.u32();
  const std::size_t header_end = r.offset();
  const auto checksum = r.u32();
  if (rec.item != item || route_tag != static_cast<std::uint8_t>(route)) {
    throw CorruptRecord(path + ": header names a different item or route");
  }
  rec.route = route;
  if (dim != dimension_) {
    throw CorruptRecord(path + ": stored dimension " + std::to_string(dim) + ", expected " +
                        std::to_string(dimension_));
  }
  if (r.remaining() != std::size_t{dim} * 4) throw CorruptRecord(path + ": payload size mismatch");
  std::vector<std::uint8_t> summed(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header_end));
  summed.insert(summed.end(), bytes.begin() + static_cast<std::ptrdiff_t>(r.offset()), bytes.end());
  if (fnv1a32(summed) != checksum) throw CorruptRecord(path + ": checksum mismatch");
  rec.embedding.resize(dim);
  for (auto& x : rec.embedding) x = r.f32();

  if (has_description) {
    const auto sidecar = fs::path(path).replace_extension(".txt");
    std::ifstream in(sidecar, std::ios::binary);
    if (!in) throw CorruptRecord(path + ": description sidecar missing");
    std::ostringstream os;
    os << in.rdbuf();
    rec.description = os.str();
  }
  return rec;
}

std::vector<SemanticRecord> synthesize_structured_embeddings(std::span<const std::string> items,
                                                             const StructuredEmbeddingConfig& config) {
  if (config.clusters == 0) throw Error("need at least one cluster");
  if (config.dimension == 0) throw Error("embedding dimension must be positive");
  if (config.noise < 0 || config.shared_noise < 0 || config.shared_noise > 1 || config.description_detail < 0) {
    throw Error("noise and description_detail must be non-negative and shared_noise in [0, 1]");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = config.dimension;
  std::vector<std::vector<double>> centroids(config.clusters, std::vector<double>(d));
  // Centroids are unit directions, on the same scale as the unit vectors
  // produced below.
  for (auto& c : centroids) {
    double sq = 0.0;
    for (auto& x : c) {
      x = normal(rng);
      sq += x * x;
    }
    for (auto& x : c) x /= std::sqrt(sq);
  }

  const double shared_w = std::sqrt(config.shared_noise);
  const double own_w = std::sqrt(1.0 - config.shared_noise);
  std::vector<SemanticRecord> out;
  out.reserve(items.size() * kAllRoutes.size());
  std::vector<double> shared(d), v(d);
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& centroid = centroids[k % config.clusters];
    for (auto& x : shared) x = normal(rng);
    for (Route route : kAllRoutes) {
      const double scale = config.noise * (route == Route::original_text ? 1.0 : config.description_detail);
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        v[j] = centroid[j] + scale * (shared_w * shared[j] + own_w * normal(rng));
        sq += v[j] * v[j];
      }
      const double inv = sq > 0 ? 1.0 / std::sqrt(sq) : 0.0;
      SemanticRecord rec;
      rec.item = items[k];
      rec.route = route;
      if (route != Route::original_text) {
        rec.description = "structured item " + items[k] + " in cluster " + std::to_string(k % config.clusters);
      }
      rec.embedding.resize(d);
      for (std::size_t j = 0; j < d; ++j) rec.embedding[j] = static_cast<float>(v[j] * inv);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::string structured_fingerprint(const StructuredEmbeddingConfig& config) {
  std::ostringstream os;
  os << "structured-c" << config.clusters << "-n" << config.noise << "-s" << config.shared_noise;
  if (config.description_detail != 1.0) os << "-t" << config.description_detail;
  os << "-d" << config.dimension << "-r" << config.seed;
  return os.str();
}

}  // namespace dmesr
