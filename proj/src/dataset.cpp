// SPDX-License-Identifier: Apache-2.0
#include "dmesr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "dmesr/error.hpp"

namespace dmesr {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_u64(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

// Numbers sort numerically and before any non-numeric id.
bool raw_id_less(const std::string& a, const std::string& b) {
  std::uint64_t x = 0, y = 0;
  const bool na = parse_u64(a, x), nb = parse_u64(b, y);
  if (na && nb) return x != y ? x < y : a < b;
  if (na != nb) return na;
  return a < b;
}

struct InteractionHash {
  std::size_t operator()(const Interaction& r) const {
    return std::hash<std::string>()(r.user) * 31 + std::hash<std::string>()(r.item) * 17 +
           std::hash<std::int64_t>()(r.timestamp);
  }
};

}  // namespace

TableFormat parse_table_format(std::string_view tag) {
  if (tag == "tsv") return TableFormat::tsv;
  if (tag == "csv") return TableFormat::csv;
  throw Error("unknown table format '" + std::string(tag) + "' (expected tsv or csv)");
}

std::vector<Interaction> parse_interactions(std::istream& in, TableFormat format, const LoadOptions& options) {
  const char sep = format == TableFormat::tsv ? '\t' : ',';
  std::size_t user_col = 0, item_col = 1, ts_col = 2;
  std::vector<Interaction> rows;
  std::unordered_set<Interaction, InteractionHash> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = options.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, sep);
    for (auto& f : fields) f = trim(f);
    if (header_pending) {
      header_pending = false;
      auto find = [&](const std::string& name) {
        auto it = std::find(fields.begin(), fields.end(), name);
        if (it == fields.end()) throw ParseError("header has no column '" + name + "'", line_no);
        return static_cast<std::size_t>(it - fields.begin());
      };
      user_col = find(options.user_column);
      item_col = find(options.item_column);
      ts_col = find(options.timestamp_column);
      continue;
    }
    const std::size_t needed = std::max({user_col, item_col, ts_col}) + 1;
    if (fields.size() < needed) {
      throw ParseError("expected at least " + std::to_string(needed) + " columns, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    Interaction r;
    r.user = fields[user_col];
    r.item = fields[item_col];
    if (r.user.empty() || r.item.empty()) throw ParseError("empty user or item identifier", line_no);
    std::uint64_t ts = 0;
    if (!parse_u64(fields[ts_col], ts) || ts > static_cast<std::uint64_t>(INT64_MAX)) {
      throw ParseError("malformed timestamp '" + fields[ts_col] + "'", line_no);
    }
    r.timestamp = static_cast<std::int64_t>(ts);
    if (seen.insert(r).second) rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<Interaction> load_interactions(const std::string& path, TableFormat format, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interaction log " + path);
  return parse_interactions(in, format, options);
}

std::vector<Interaction> apply_filters(std::vector<Interaction> interactions, std::size_t min_user,
                                       std::size_t min_item) {
  if (min_item > 0) {
    std::unordered_map<std::string, std::size_t> item_counts;
    for (const auto& r : interactions) ++item_counts[r.item];
    std::erase_if(interactions, [&](const Interaction& r) { return item_counts[r.item] < min_item; });
  }
  if (min_user > 0) {
    std::unordered_map<std::string, std::size_t> user_counts;
    for (const auto& r : interactions) ++user_counts[r.user];
    std::erase_if(interactions, [&](const Interaction& r) { return user_counts[r.user] < min_user; });
  }
  return interactions;
}

std::vector<Interaction> drop_items_without_assets(std::vector<Interaction> interactions,
                                                   const std::function<bool(const std::string&)>& has_assets) {
  std::erase_if(interactions, [&](const Interaction& r) { return !has_assets(r.item); });
  return interactions;
}

IdMap IdMap::from_raw(std::vector<std::string> raw_ids) {
  std::sort(raw_ids.begin(), raw_ids.end(), raw_id_less);
  raw_ids.erase(std::unique(raw_ids.begin(), raw_ids.end()), raw_ids.end());
  IdMap map;
  map.raw_ = std::move(raw_ids);
  for (std::uint32_t i = 0; i < map.raw_.size(); ++i) map.index_.emplace(map.raw_[i], i);
  return map;
}

std::uint32_t IdMap::dense(const std::string& raw) const {
  auto it = index_.find(raw);
  if (it == index_.end()) throw Error("unknown identifier '" + raw + "'");
  return it->second;
}

std::size_t SequenceDataset::num_interactions() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

SequenceDataset build_sequences(const std::vector<Interaction>& interactions) {
  SequenceDataset ds;
  std::vector<std::string> users, items;
  for (const auto& r : interactions) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  ds.users = IdMap::from_raw(std::move(users));
  ds.items = IdMap::from_raw(std::move(items));

  std::vector<std::vector<std::pair<std::int64_t, ItemId>>> timed(ds.num_users());
  for (const auto& r : interactions) timed[ds.users.dense(r.user)].emplace_back(r.timestamp, ds.items.dense(r.item));
  ds.sequences.resize(ds.num_users());
  ds.popularity.assign(ds.num_items(), 0);
  for (std::size_t u = 0; u < timed.size(); ++u) {
    std::stable_sort(timed[u].begin(), timed[u].end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [ts, item] : timed[u]) {
      ds.sequences[u].push_back(item);
      ++ds.popularity[item];
    }
  }
  return ds;
}

LeaveOneOutSplit leave_one_out_split(const SequenceDataset& dataset) {
  LeaveOneOutSplit split;
  for (UserId u = 0; u < dataset.sequences.size(); ++u) {
    const auto& seq = dataset.sequences[u];
    if (seq.size() < 3) {
      ++split.excluded;
      continue;
    }
    const std::size_t n = seq.size();
    TrainSequence train{u, std::vector<ItemId>(seq.begin(), seq.end() - 2)};
    EvalInstance valid{u, train.items, seq[n - 2], {}};
    EvalInstance test{u, std::vector<ItemId>(seq.begin(), seq.end() - 1), seq[n - 1], {}};
    split.train.push_back(std::move(train));
    split.valid.push_back(std::move(valid));
    split.test.push_back(std::move(test));
  }
  return split;
}

namespace {

std::vector<ItemId> sorted_unique(std::span<const ItemId> history) {
  std::vector<ItemId> h(history.begin(), history.end());
  std::sort(h.begin(), h.end());
  h.erase(std::unique(h.begin(), h.end()), h.end());
  return h;
}

std::size_t pool_size(const std::vector<ItemId>& hist, std::size_t catalog_size) {
  const auto in_catalog = std::count_if(hist.begin(), hist.end(), [&](ItemId i) { return i < catalog_size; });
  return catalog_size - static_cast<std::size_t>(in_catalog);
}

}  // namespace

std::vector<ItemId> sample_negatives(std::span<const ItemId> history, std::size_t catalog_size, std::size_t n,
                                     std::mt19937_64& rng, const std::string& user_label) {
  const auto hist = sorted_unique(history);
  const std::size_t available = pool_size(hist, catalog_size);
  if (available < n) {
    throw Error("user " + user_label + ": only " + std::to_string(available) + " candidate negatives for " +
                std::to_string(n) + " requested");
  }
  auto in_history = [&](ItemId i) { return std::binary_search(hist.begin(), hist.end(), i); };
  std::vector<ItemId> out;
  out.reserve(n);
  if (available >= 2 * n) {
    // Sequential rejection: each accepted draw is uniform over what is left.
    std::uniform_int_distribution<std::size_t> pick(0, catalog_size - 1);
    std::unordered_set<ItemId> chosen;
    while (out.size() < n) {
      const auto item = static_cast<ItemId>(pick(rng));
      if (in_history(item) || !chosen.insert(item).second) continue;
      out.push_back(item);
    }
    return out;
  }
  std::vector<ItemId> pool;
  pool.reserve(available);
  for (ItemId i = 0; i < catalog_size; ++i)
    if (!in_history(i)) pool.push_back(i);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.push_back(pool[i]);
  }
  return out;
}

std::vector<ItemId> sample_negatives_with_replacement(std::span<const ItemId> history, std::size_t catalog_size,
                                                      std::size_t n, std::mt19937_64& rng,
                                                      const std::string& user_label) {
  const auto hist = sorted_unique(history);
  std::vector<ItemId> pool;
  for (ItemId i = 0; i < catalog_size; ++i)
    if (!std::binary_search(hist.begin(), hist.end(), i)) pool.push_back(i);
  if (pool.empty()) throw Error("user " + user_label + ": no candidate negatives outside the history");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<ItemId> out(n);
  for (auto& item : out) item = pool[pick(rng)];
  return out;
}

void attach_negatives(std::vector<EvalInstance>& instances, const SequenceDataset& dataset,
                      const NegativeSampling& sampling) {
  std::mt19937_64 rng(sampling.seed);
  for (auto& inst : instances) {
    const auto& history = dataset.sequences.at(inst.user);
    const std::string label = dataset.users.raw(inst.user);
    inst.negatives = sampling.with_replacement
                         ? sample_negatives_with_replacement(history, dataset.num_items(), sampling.count, rng, label)
                         : sample_negatives(history, dataset.num_items(), sampling.count, rng, label);
  }
}

void save_instances(const std::string& path, const std::vector<EvalInstance>& instances) {
  std::ostringstream os;
  for (const auto& inst : instances) {
    os << inst.user << '\t' << inst.target << '\t';
    for (std::size_t i = 0; i < inst.prefix.size(); ++i) os << (i ? " " : "") << inst.prefix[i];
    os << '\t';
    for (std::size_t i = 0; i < inst.negatives.size(); ++i) os << (i ? " " : "") << inst.negatives[i];
    os << '\n';
  }
  io::write_text_atomic(path, os.str());
}

std::vector<EvalInstance> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<EvalInstance> out;
  std::string line;
  std::size_t line_no = 0;
  auto ids = [&](const std::string& field) {
    std::vector<ItemId> v;
    std::istringstream is(field);
    std::string tok;
    while (is >> tok) {
      std::uint64_t x = 0;
      if (!parse_u64(tok, x)) throw ParseError("bad item id '" + tok + "' in " + path, line_no);
      v.push_back(static_cast<ItemId>(x));
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 4) throw ParseError("expected 4 tab-separated fields in " + path, line_no);
    std::uint64_t user = 0, target = 0;
    if (!parse_u64(f[0], user) || !parse_u64(f[1], target)) throw ParseError("bad user/target in " + path, line_no);
    out.push_back({static_cast<UserId>(user), ids(f[2]), static_cast<ItemId>(target), ids(f[3])});
  }
  return out;
}

std::vector<std::size_t> training_popularity(const LeaveOneOutSplit& split, std::size_t num_items) {
  std::vector<std::size_t> counts(num_items, 0);
  for (const auto& t : split.train)
    for (ItemId i : t.items) ++counts.at(i);
  return counts;
}

bool LongTailPartition::is_tail(ItemId item) const { return std::binary_search(tail.begin(), tail.end(), item); }

LongTailPartition long_tail_partition(std::span<const std::size_t> popularity, double head_fraction) {
  std::vector<ItemId> order(popularity.size());
  std::iota(order.begin(), order.end(), ItemId{0});
  std::stable_sort(order.begin(), order.end(), [&](ItemId a, ItemId b) { return popularity[a] > popularity[b]; });
  // Guard against 0.2 * n landing a hair above an integer.
  const auto head_count = std::min(
      order.size(), static_cast<std::size_t>(std::ceil(head_fraction * static_cast<double>(order.size()) - 1e-9)));
  LongTailPartition part;
  part.head.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head_count));
  part.tail.assign(order.begin() + static_cast<std::ptrdiff_t>(head_count), order.end());
  std::sort(part.head.begin(), part.head.end());
  std::sort(part.tail.begin(), part.tail.end());
  return part;
}

namespace {
std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}
}  // namespace

std::string DatasetStats::avg_seq_len_text() const { return fixed2(avg_seq_len); }
std::string DatasetStats::sparsity_text() const { return fixed2(100.0 * sparsity) + "%"; }

DatasetStats dataset_stats(std::size_t users, std::size_t items, std::size_t interactions) {
  DatasetStats s{users, items, interactions, 0.0, 0.0};
  if (users > 0) s.avg_seq_len = static_cast<double>(interactions) / static_cast<double>(users);
  if (users > 0 && items > 0) {
    s.sparsity = 1.0 - static_cast<double>(interactions) / (static_cast<double>(users) * static_cast<double>(items));
  }
  return s;
}

DatasetStats dataset_stats(const SequenceDataset& dataset) {
  return dataset_stats(dataset.num_users(), dataset.num_items(), dataset.num_interactions());
}

std::string format_key_values(const std::map<std::string, std::string>& values) {
  std::ostringstream os;
  for (const auto& [k, v] : values) os << k << " = " << v << '\n';
  return os.str();
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value' in " + path, line_no);
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

void save_prepared(const std::string& dir, const SequenceDataset& dataset,
                   const std::map<std::string, std::string>& manifest) {
  std::filesystem::create_directories(dir);
  auto write_map = [&](const std::string& name, const IdMap& map) {
    std::ostringstream os;
    for (std::size_t i = 0; i < map.size(); ++i) os << i << '\t' << map.raw(static_cast<std::uint32_t>(i)) << '\n';
    io::write_text_atomic(dir + "/" + name, os.str());
  };
  write_map("users.txt", dataset.users);
  write_map("items.txt", dataset.items);
  std::ostringstream seq;
  for (std::size_t u = 0; u < dataset.sequences.size(); ++u) {
    seq << u;
    for (ItemId i : dataset.sequences[u]) seq << ' ' << i;
    seq << '\n';
  }
  io::write_text_atomic(dir + "/sequences.txt", seq.str());

  const auto stats = dataset_stats(dataset);
  auto values = manifest;
  values["users"] = std::to_string(stats.users);
  values["items"] = std::to_string(stats.items);
  values["interactions"] = std::to_string(stats.interactions);
  values["avg_seq_len"] = stats.avg_seq_len_text();
  values["sparsity"] = stats.sparsity_text();
  io::write_text_atomic(dir + "/stats.txt", format_key_values(values));
}

SequenceDataset load_prepared(const std::string& dir) {
  auto read_map = [&](const std::string& name) {
    std::ifstream in(dir + "/" + name);
    if (!in) throw Error("cannot open " + dir + "/" + name);
    std::vector<std::string> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      std::uint64_t dense = 0;
      if (tab == std::string::npos || !parse_u64(line.substr(0, tab), dense) || dense != raw.size()) {
        throw ParseError("bad id map row in " + name, line_no);
      }
      raw.push_back(line.substr(tab + 1));
    }
    return raw;
  };
  SequenceDataset ds;
  const auto users = read_map("users.txt");
  const auto items = read_map("items.txt");
  ds.users = IdMap::from_raw(users);
  ds.items = IdMap::from_raw(items);
  if (ds.users.raw_ids() != users || ds.items.raw_ids() != items) {
    throw Error(dir + ": id maps are not in canonical order");
  }
  std::ifstream in(dir + "/sequences.txt");
  if (!in) throw Error("cannot open " + dir + "/sequences.txt");
  ds.sequences.resize(ds.num_users());
  ds.popularity.assign(ds.num_items(), 0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::uint64_t user = 0, item = 0;
    std::string tok;
    is >> tok;
    if (!parse_u64(tok, user) || user >= ds.num_users()) throw ParseError("bad user id in sequences.txt", line_no);
    while (is >> tok) {
      if (!parse_u64(tok, item) || item >= ds.num_items()) throw ParseError("bad item id in sequences.txt", line_no);
      ds.sequences[user].push_back(static_cast<ItemId>(item));
      ++ds.popularity[item];
    }
  }
  return ds;
}

std::vector<Interaction> make_cluster_walk_interactions(const ClusterWalkConfig& config) {
  if (config.clusters == 0 || config.items < config.clusters) throw Error("cluster walk needs items >= clusters >= 1");
  if (config.min_len < 3 || config.max_len < config.min_len) throw Error("cluster walk needs 3 <= min_len <= max_len");
  std::mt19937_64 rng(config.seed);
  std::vector<std::vector<std::size_t>> rings(config.clusters);
  for (std::size_t i = 0; i < config.items; ++i) rings[i % config.clusters].push_back(i);
  std::uniform_int_distribution<std::size_t> len_dist(config.min_len, config.max_len);
  std::bernoulli_distribution skip(config.skip_probability);
  std::vector<Interaction> out;
  for (std::size_t u = 0; u < config.users; ++u) {
    const auto& ring = rings[u % config.clusters];
    std::uniform_int_distribution<std::size_t> start_dist(0, ring.size() - 1);
    std::size_t pos = start_dist(rng);
    const std::size_t len = len_dist(rng);
    for (std::size_t k = 0; k < len; ++k) {
      out.push_back({std::to_string(u), std::to_string(ring[pos]), static_cast<std::int64_t>(1000 * u + k)});
      pos = (pos + (skip(rng) ? 2 : 1)) % ring.size();
    }
  }
  return out;
}

}  // namespace dmesr
