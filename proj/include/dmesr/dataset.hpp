// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dmesr {

using ItemId = std::uint32_t;
using UserId = std::uint32_t;

struct Interaction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

enum class TableFormat { tsv, csv };

/// "tsv" or "csv"; anything else is rejected.
TableFormat parse_table_format(std::string_view tag);

struct LoadOptions {
  bool has_header = false;
  // Column names are only consulted when the file has a header; otherwise
  // the first three columns are user, item, timestamp.
  std::string user_column = "user";
  std::string item_column = "item";
  std::string timestamp_column = "timestamp";
};

/// Parses rows, drops exact duplicates (first occurrence wins) and keeps
/// file order. Errors cite the 1-based line number.
std::vector<Interaction> load_interactions(const std::string& path, TableFormat format,
                                           const LoadOptions& options = {});
std::vector<Interaction> parse_interactions(std::istream& in, TableFormat format, const LoadOptions& options = {});

/// One pass dropping items with fewer than `min_item` rows, then one pass
/// dropping users with fewer than `min_user` of the remaining rows.
std::vector<Interaction> apply_filters(std::vector<Interaction> interactions, std::size_t min_user,
                                       std::size_t min_item);

/// Removes rows whose item fails `has_assets`.
std::vector<Interaction> drop_items_without_assets(std::vector<Interaction> interactions,
                                                   const std::function<bool(const std::string&)>& has_assets);

/// Bidirectional raw-id <-> dense-id map.
class IdMap {
 public:
  /// Dense ids follow the sorted order of the raw ids (numeric-aware).
  static IdMap from_raw(std::vector<std::string> raw_ids);

  std::size_t size() const { return raw_.size(); }
  const std::string& raw(std::uint32_t dense) const { return raw_.at(dense); }
  std::uint32_t dense(const std::string& raw) const;
  bool contains(const std::string& raw) const { return index_.count(raw) != 0; }
  const std::vector<std::string>& raw_ids() const { return raw_; }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct SequenceDataset {
  IdMap users;
  IdMap items;
  std::vector<std::vector<ItemId>> sequences;  // indexed by dense user id
  std::vector<std::size_t> popularity;         // interactions per dense item

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }
  std::size_t num_interactions() const;
};

/// Groups by user and orders each sequence by timestamp; equal timestamps
/// keep file order.
SequenceDataset build_sequences(const std::vector<Interaction>& interactions);

struct EvalInstance {
  UserId user = 0;
  std::vector<ItemId> prefix;
  ItemId target = 0;
  std::vector<ItemId> negatives;
};

struct TrainSequence {
  UserId user = 0;
  std::vector<ItemId> items;
};

struct LeaveOneOutSplit {
  std::vector<TrainSequence> train;
  std::vector<EvalInstance> valid;  // negatives not yet attached
  std::vector<EvalInstance> test;
  std::size_t excluded = 0;  // users with fewer than three interactions
};

LeaveOneOutSplit leave_one_out_split(const SequenceDataset& dataset);

/// n distinct items drawn uniformly from [0, catalog_size) minus `history`.
std::vector<ItemId> sample_negatives(std::span<const ItemId> history, std::size_t catalog_size, std::size_t n,
                                     std::mt19937_64& rng, const std::string& user_label = "");

/// n independent uniform draws from the same pool; for catalogs smaller
/// than n + |history|.
std::vector<ItemId> sample_negatives_with_replacement(std::span<const ItemId> history, std::size_t catalog_size,
                                                      std::size_t n, std::mt19937_64& rng,
                                                      const std::string& user_label = "");

struct NegativeSampling {
  std::size_t count = 100;
  bool with_replacement = false;
  std::uint64_t seed = 42;
};

/// Fills `negatives` of every instance, excluding each user's full history.
void attach_negatives(std::vector<EvalInstance>& instances, const SequenceDataset& dataset,
                      const NegativeSampling& sampling);

void save_instances(const std::string& path, const std::vector<EvalInstance>& instances);
std::vector<EvalInstance> load_instances(const std::string& path);

/// Interaction counts over the training sequences only.
std::vector<std::size_t> training_popularity(const LeaveOneOutSplit& split, std::size_t num_items);

struct LongTailPartition {
  std::vector<ItemId> head;
  std::vector<ItemId> tail;
  bool is_tail(ItemId item) const;
};

/// Sorts by descending popularity (ties by ascending id); the first
/// ceil(head_fraction * |V|) items are the head.
LongTailPartition long_tail_partition(std::span<const std::size_t> popularity, double head_fraction = 0.2);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double avg_seq_len = 0.0;
  double sparsity = 0.0;  // fraction in [0, 1]

  std::string avg_seq_len_text() const;  // two decimals
  std::string sparsity_text() const;     // percentage, two decimals, e.g. "98.30%"
};

DatasetStats dataset_stats(std::size_t users, std::size_t items, std::size_t interactions);
DatasetStats dataset_stats(const SequenceDataset& dataset);

struct PrepareConfig {
  std::size_t min_user = 0;
  std::size_t min_item = 0;
  std::size_t max_len = 200;
  std::uint64_t seed = 42;
};

/// Prepared-dataset directory: users.txt / items.txt ("dense<TAB>raw"),
/// sequences.txt ("user item item ..."), stats.txt ("key = value").
void save_prepared(const std::string& dir, const SequenceDataset& dataset,
                   const std::map<std::string, std::string>& manifest);
SequenceDataset load_prepared(const std::string& dir);
std::map<std::string, std::string> read_key_values(const std::string& path);
std::string format_key_values(const std::map<std::string, std::string>& values);

/// Synthetic interaction log: items round-robin into clusters, each user
/// walks the ring of one cluster, mostly one step at a time.
struct ClusterWalkConfig {
  std::size_t users = 200;
  std::size_t items = 50;
  std::size_t clusters = 2;
  std::size_t min_len = 6;
  std::size_t max_len = 12;
  double skip_probability = 0.2;  // chance of stepping two places instead of one
  std::uint64_t seed = 7;
};

std::vector<Interaction> make_cluster_walk_interactions(const ClusterWalkConfig& config);

}  // namespace dmesr
