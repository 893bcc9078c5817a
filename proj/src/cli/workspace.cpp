// SPDX-License-Identifier: Apache-2.0
#include "workspace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "dmesr/error.hpp"
#include "dmesr/hash.hpp"

namespace dmesr::cli {

fs::path Workspace::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : root_ / p;
}

std::string Workspace::relative(const fs::path& path) const {
  const auto rel = fs::weakly_canonical(path).lexically_relative(fs::weakly_canonical(root_));
  if (rel.empty() || *rel.begin() == "..") return path.string();
  return rel.generic_string();
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw Error(dir.string() + " is locked by another writer (remove " + path_.string() + " if it is stale)");
    }
    throw Error("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

RunManifest::RunManifest(std::string command, const Workspace& workspace) : workspace_(workspace) {
  doc_["command"] = std::move(command);
  doc_["config"] = nlohmann::ordered_json::object();
  doc_["seed"] = nullptr;
  doc_["inputs"] = nlohmann::ordered_json::object();
  doc_["started"] = utc_timestamp();
}

void RunManifest::config(const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) doc_["config"][k] = v;
}

void RunManifest::artifact(const fs::path& path) {
  const auto rel = workspace_.relative(path);
  if (std::find(artifacts_.begin(), artifacts_.end(), rel) == artifacts_.end()) artifacts_.push_back(rel);
}

void RunManifest::write(const fs::path& dir, const std::string& status) {
  const auto path = dir / "manifest.json";
  artifact(path);
  doc_["finished"] = utc_timestamp();
  doc_["status"] = status;
  doc_["artifacts"] = artifacts_;
  write_text(path, doc_.dump(2) + "\n");
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hash_files(const std::vector<fs::path>& files) {
  std::uint64_t h = fnv1a64("");
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error("cannot read " + f.string());
    std::ostringstream os;
    os << in.rdbuf();
    h = fnv1a64(os.str(), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) { io::write_text_atomic(path.string(), text); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace dmesr::cli
