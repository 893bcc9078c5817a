// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "workspace.hpp"

namespace dmesr::cli {

struct FixtureOptions {
  std::string name = "fixture";
  std::size_t users = 200;
  std::size_t items = 50;
  std::size_t clusters = 2;
  std::size_t min_len = 6;
  std::size_t max_len = 12;
  double skip = 0.2;
  std::uint64_t seed = 7;
};

struct PrepareOptions {
  std::string input;
  std::string dataset;
  std::string format;  // empty: from the file extension
  bool header = false;
  std::string user_column = "user";
  std::string item_column = "item";
  std::string time_column = "timestamp";
  std::size_t min_user = 0;
  std::size_t min_item = 0;
  std::size_t max_len = 200;
  std::string catalog;  // optional; enables --require-assets
  bool require_assets = false;
  std::size_t negatives = 100;
  bool with_replacement = false;
  std::uint64_t seed = 42;
};

struct EmbedOptions {
  std::string dataset;
  std::string provider = "synthetic";  // synthetic | remote | structured
  std::string catalog;
  std::string routes = "text,visual,hybrid,orig";
  std::size_t dimension = 1536;
  std::uint64_t seed = 42;
  bool force = false;
  // remote
  std::string endpoint = "http://localhost:8000";
  std::string chat_model;
  std::string embedding_model;
  std::string api_key_env = "DMESR_API_KEY";
  std::size_t retries = 3;
  std::size_t backoff_ms = 500;
  std::size_t timeout_s = 60;
  std::optional<double> temperature;
  std::optional<std::size_t> max_tokens;
  // structured
  std::size_t clusters = 2;
  double noise = 0.1;
  double shared_noise = 0.0;
  double description_detail = 1.0;
};

struct TrainOptions {
  std::string dataset;
  std::string config;
  std::string cache;  // provider fingerprint; optional when only one exists
  std::string run;
  std::optional<std::string> backbone;
  std::optional<std::string> ablate;
  std::optional<std::string> item_source;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> epochs;
};

struct EvalOptions {
  std::string checkpoint;
  std::string split = "test";
  bool tail_report = false;
  double head_fraction = 0.2;
};

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string name = "report";
};

void cmd_fixture(const Workspace& ws, const FixtureOptions& o, std::ostream& out);
void cmd_prepare(const Workspace& ws, const PrepareOptions& o, std::ostream& out);
void cmd_embed(const Workspace& ws, const EmbedOptions& o, std::ostream& out);
void cmd_train(const Workspace& ws, const TrainOptions& o, std::ostream& out);
void cmd_eval(const Workspace& ws, const EvalOptions& o, std::ostream& out);
void cmd_report(const Workspace& ws, const ReportOptions& o, std::ostream& out);

}  // namespace dmesr::cli
