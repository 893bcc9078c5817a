// SPDX-License-Identifier: Apache-2.0
// Run directories, lock files and manifests shared by the CLI commands.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace dmesr::cli {

namespace fs = std::filesystem;

class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) {}

  /// Relative paths are taken from the workspace root.
  fs::path resolve(const std::string& path) const;
  /// Path as recorded in manifests: relative to the root when inside it.
  std::string relative(const fs::path& path) const;

  fs::path raw_dir(const std::string& name) const { return root_ / "raw" / name; }
  fs::path dataset_dir(const std::string& name) const { return root_ / "datasets" / name; }
  fs::path cache_root() const { return root_ / "cache"; }
  fs::path run_dir(const std::string& name) const { return root_ / "runs" / name; }
  fs::path report_dir(const std::string& name) const { return root_ / "reports" / name; }

 private:
  fs::path root_;
};

/// Exclusive writer lock on a directory, held for the object's lifetime.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

/// The single manifest.json of a run directory.
class RunManifest {
 public:
  RunManifest(std::string command, const Workspace& workspace);

  void config(const std::map<std::string, std::string>& values);
  void seed(std::uint64_t seed) { doc_["seed"] = seed; }
  void input(const std::string& key, const std::string& value) { doc_["inputs"][key] = value; }
  void artifact(const fs::path& path);
  /// Stamps the finish time and status, then writes `dir/manifest.json`.
  void write(const fs::path& dir, const std::string& status = "ok");

 private:
  const Workspace& workspace_;
  nlohmann::ordered_json doc_;
  std::vector<std::string> artifacts_;
};

std::string utc_timestamp();
/// FNV-1a 64 hex digest of the concatenated files.
std::string hash_files(const std::vector<fs::path>& files);
void write_text(const fs::path& path, const std::string& text);
nlohmann::json read_json(const fs::path& path);

}  // namespace dmesr::cli
