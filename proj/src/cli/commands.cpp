// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "dmesr/dataset.hpp"
#include "dmesr/error.hpp"
#include "dmesr/evaluation.hpp"
#include "dmesr/model.hpp"
#include "dmesr/semantics.hpp"
#include "dmesr/training.hpp"
#include "text_values.hpp"

namespace dmesr::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void require_name(const std::string& what, const std::string& name) {
  if (name.empty() || name == "." || name == ".." || name.find('/') != std::string::npos) {
    throw Error("invalid " + what + " name '" + name + "'");
  }
}

SequenceDataset load_dataset(const Workspace& ws, const std::string& name) {
  require_name("dataset", name);
  const auto dir = ws.dataset_dir(name);
  if (!fs::exists(dir / "sequences.txt")) {
    throw Error("dataset '" + name + "' is not prepared (missing " + (dir / "sequences.txt").string() + ")");
  }
  return load_prepared(dir.string());
}

struct CacheHandle {
  std::string fingerprint;
  std::size_t dimension = 0;
  fs::path dir;
};

CacheHandle find_cache(const Workspace& ws, const std::string& dataset, const std::string& fingerprint) {
  const auto root = ws.cache_root() / dataset;
  CacheHandle h;
  if (!fingerprint.empty()) {
    h.fingerprint = fingerprint;
  } else {
    std::vector<std::string> found;
    if (fs::exists(root)) {
      for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && fs::exists(e.path() / "manifest.json")) found.push_back(e.path().filename().string());
      }
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) throw Error("no embedding cache for dataset '" + dataset + "' (run embed first)");
    if (found.size() > 1) {
      std::string list;
      for (const auto& f : found) list += (list.empty() ? "" : ", ") + f;
      throw Error("several embedding caches for dataset '" + dataset + "' (" + list + "); pick one with --cache");
    }
    h.fingerprint = found.front();
  }
  h.dir = root / h.fingerprint;
  if (!fs::exists(h.dir / "manifest.json")) throw Error("no embedding cache at " + h.dir.string());
  const auto manifest = read_json(h.dir / "manifest.json");
  h.dimension = text::to_u64("dimension", manifest.at("config").at("dimension").get<std::string>());
  return h;
}

std::shared_ptr<const SemanticTable> load_semantics(const Workspace& ws, const std::string& dataset,
                                                    const CacheHandle& cache, const IdMap& items) {
  const EmbeddingCache store(ws.cache_root().string(), dataset, cache.fingerprint, cache.dimension);
  return std::make_shared<const SemanticTable>(SemanticTable::from_cache(store, items));
}

}  // namespace

void cmd_fixture(const Workspace& ws, const FixtureOptions& o, std::ostream& out) {
  require_name("fixture", o.name);
  const auto dir = ws.raw_dir(o.name);
  DirectoryLock lock(dir);
  RunManifest manifest("fixture", ws);
  ClusterWalkConfig walk;
  walk.users = o.users;
  walk.items = o.items;
  walk.clusters = o.clusters;
  walk.min_len = o.min_len;
  walk.max_len = o.max_len;
  walk.skip_probability = o.skip;
  walk.seed = o.seed;
  const auto interactions = make_cluster_walk_interactions(walk);

  std::ostringstream rows;
  for (const auto& r : interactions) rows << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
  write_text(dir / "interactions.tsv", rows.str());
  std::ostringstream catalog;
  for (std::size_t i = 0; i < o.items; ++i) {
    const json entry = {{"item", std::to_string(i)},
                        {"attributes", json::array({json::array({"title", "Item " + std::to_string(i)}),
                                                    json::array({"group", "group " + std::to_string(i % o.clusters)})})}};
    catalog << entry.dump() << '\n';
  }
  write_text(dir / "catalog.jsonl", catalog.str());

  manifest.config({{"users", std::to_string(o.users)},
                   {"items", std::to_string(o.items)},
                   {"clusters", std::to_string(o.clusters)},
                   {"min_len", std::to_string(o.min_len)},
                   {"max_len", std::to_string(o.max_len)},
                   {"skip", text::from_double(o.skip)}});
  manifest.seed(o.seed);
  manifest.artifact(dir / "interactions.tsv");
  manifest.artifact(dir / "catalog.jsonl");
  manifest.write(dir);
  out << "fixture " << o.name << ": " << interactions.size() << " interactions written to "
      << ws.relative(dir / "interactions.tsv") << '\n';
}

void cmd_prepare(const Workspace& ws, const PrepareOptions& o, std::ostream& out) {
  require_name("dataset", o.dataset);
  const auto input = ws.resolve(o.input);
  if (!fs::exists(input)) throw Error("input file not found: " + input.string());
  const auto dir = ws.dataset_dir(o.dataset);
  DirectoryLock lock(dir);
  RunManifest manifest("prepare", ws);

  std::string format = o.format;
  if (format.empty()) format = input.extension() == ".csv" ? "csv" : "tsv";
  LoadOptions load;
  load.has_header = o.header;
  load.user_column = o.user_column;
  load.item_column = o.item_column;
  load.timestamp_column = o.time_column;
  auto interactions = load_interactions(input.string(), parse_table_format(format), load);
  manifest.input("raw", ws.relative(input));
  manifest.input("raw_hash", hash_files({input}));

  if (o.require_assets) {
    if (o.catalog.empty()) throw Error("--require-assets needs --catalog");
    const auto catalog_path = ws.resolve(o.catalog);
    const auto catalog = load_item_catalog(catalog_path.string());
    manifest.input("catalog", ws.relative(catalog_path));
    interactions = drop_items_without_assets(std::move(interactions), [&](const std::string& item) {
      const auto it = catalog.find(item);
      return it != catalog.end() && has_all_assets(it->second);
    });
  }
  interactions = apply_filters(std::move(interactions), o.min_user, o.min_item);
  if (interactions.empty()) throw Error("no interactions left after filtering");

  const SequenceDataset dataset = build_sequences(interactions);
  const std::map<std::string, std::string> config{
      {"dataset", o.dataset},
      {"format", format},
      {"min_user", std::to_string(o.min_user)},
      {"min_item", std::to_string(o.min_item)},
      {"max_len", std::to_string(o.max_len)},
      {"negatives", std::to_string(o.negatives)},
      {"with_replacement", text::from_bool(o.with_replacement)},
      {"require_assets", text::from_bool(o.require_assets)},
      {"seed", std::to_string(o.seed)}};
  save_prepared(dir.string(), dataset, config);

  LeaveOneOutSplit split = leave_one_out_split(dataset);
  NegativeSampling sampling{o.negatives, o.with_replacement, o.seed};
  attach_negatives(split.valid, dataset, sampling);
  sampling.seed += 1;
  attach_negatives(split.test, dataset, sampling);
  save_instances((dir / "valid.tsv").string(), split.valid);
  save_instances((dir / "test.tsv").string(), split.test);

  manifest.config(config);
  manifest.seed(o.seed);
  for (const char* f : {"users.txt", "items.txt", "sequences.txt", "stats.txt", "valid.tsv", "test.tsv"}) {
    manifest.artifact(dir / f);
  }
  manifest.write(dir);

  const auto stats = dataset_stats(dataset);
  out << "prepared " << o.dataset << ": users=" << stats.users << " items=" << stats.items
      << " interactions=" << stats.interactions << " avg_seq_len=" << stats.avg_seq_len_text()
      << " sparsity=" << stats.sparsity_text() << " excluded_users=" << split.excluded << '\n';
}

void cmd_embed(const Workspace& ws, const EmbedOptions& o, std::ostream& out) {
  const SequenceDataset dataset = load_dataset(ws, o.dataset);
  const auto routes = parse_routes(o.routes);
  const auto& items = dataset.items.raw_ids();

  std::map<std::string, std::string> config{{"dataset", o.dataset},
                                            {"provider", o.provider},
                                            {"dimension", std::to_string(o.dimension)},
                                            {"routes", o.routes}};
  std::unique_ptr<Provider> provider;
  std::vector<SemanticRecord> structured;
  std::string fingerprint;
  if (o.provider == "structured") {
    StructuredEmbeddingConfig sc;
    sc.clusters = o.clusters;
    sc.noise = o.noise;
    sc.shared_noise = o.shared_noise;
    sc.description_detail = o.description_detail;
    sc.dimension = o.dimension;
    sc.seed = o.seed;
    structured = synthesize_structured_embeddings(items, sc);
    fingerprint = structured_fingerprint(sc);
    config["clusters"] = std::to_string(o.clusters);
    config["noise"] = text::from_double(o.noise);
    config["shared_noise"] = text::from_double(o.shared_noise);
    config["description_detail"] = text::from_double(o.description_detail);
  } else if (o.provider == "synthetic" || o.provider == "remote") {
    ProviderConfig pc;
    pc.kind = o.provider == "remote" ? ProviderKind::remote : ProviderKind::synthetic;
    pc.dimension = o.dimension;
    pc.seed = o.seed;
    pc.endpoint = o.endpoint;
    pc.chat_model = o.chat_model;
    pc.embedding_model = o.embedding_model;
    pc.api_key_env = o.api_key_env;
    pc.timeout = std::chrono::seconds(o.timeout_s);
    pc.retry_budget = o.retries;
    pc.backoff = std::chrono::milliseconds(o.backoff_ms);
    pc.temperature = o.temperature;
    pc.max_tokens = o.max_tokens;
    if (pc.kind == ProviderKind::remote) {
      if (o.catalog.empty()) throw Error("the remote provider needs --catalog");
      if (o.chat_model.empty() || o.embedding_model.empty()) {
        throw Error("the remote provider needs --chat-model and --embedding-model");
      }
      config["endpoint"] = o.endpoint;
      config["chat_model"] = o.chat_model;
      config["embedding_model"] = o.embedding_model;
    }
    provider = make_provider(pc);
    fingerprint = provider->fingerprint();
  } else {
    throw Error("unknown provider '" + o.provider + "' (expected synthetic, remote or structured)");
  }
  config["fingerprint"] = fingerprint;

  std::map<std::string, ItemAttributes> catalog;
  if (!o.catalog.empty()) catalog = load_item_catalog(ws.resolve(o.catalog).string());

  const EmbeddingCache cache(ws.cache_root().string(), o.dataset, fingerprint, o.dimension);
  const auto dir = ws.cache_root() / o.dataset / fingerprint;
  DirectoryLock lock(dir);
  RunManifest manifest("embed", ws);
  manifest.config(config);
  manifest.seed(o.seed);
  manifest.input("dataset_hash", hash_files({ws.dataset_dir(o.dataset) / "items.txt"}));
  if (!o.catalog.empty()) manifest.input("catalog", ws.relative(ws.resolve(o.catalog)));

  struct Progress {
    std::size_t done = 0, fresh = 0;
  };
  std::map<Route, Progress> progress;
  auto report = [&] {
    for (Route r : routes) {
      out << route_name(r) << ": " << progress[r].done << "/" << items.size() << " cached (" << progress[r].fresh
          << " new)\n";
    }
  };
  auto finish = [&](const std::string& status) {
    if (fs::exists(dir)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name != ".lock" && name != "manifest.json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) manifest.artifact(f);
    }
    manifest.write(dir, status);
  };

  try {
    for (Route r : routes) {
      for (std::size_t k = 0; k < items.size(); ++k) {
        const std::string& item = items[k];
        if (!o.force && cache.contains(item, r)) {
          ++progress[r].done;
          continue;
        }
        if (provider) {
          ItemAttributes attrs;
          if (auto it = catalog.find(item); it != catalog.end()) attrs = it->second;
          if (attrs.attributes.empty()) attrs.attributes.emplace_back("item", item);
          // The offline provider never opens images; give it a stable stand-in.
          if (o.provider == "synthetic" && !attrs.image_path) attrs.image_path = "synthetic-image/" + item;
          cache.put(build_record(item, attrs, r, *provider));
        } else {
          cache.put(structured[k * kAllRoutes.size() + static_cast<std::size_t>(r)]);
        }
        ++progress[r].done;
        ++progress[r].fresh;
      }
    }
  } catch (...) {
    report();
    finish("failed");
    throw;
  }
  report();
  finish("ok");
  out << "cache " << ws.relative(dir) << '\n';
}

void cmd_train(const Workspace& ws, const TrainOptions& o, std::ostream& out) {
  const SequenceDataset dataset = load_dataset(ws, o.dataset);
  const auto data_dir = ws.dataset_dir(o.dataset);
  const auto stats = read_key_values((data_dir / "stats.txt").string());

  std::map<std::string, std::string> settings;
  if (!o.config.empty()) {
    const auto path = ws.resolve(o.config);
    if (!fs::exists(path)) throw Error("config file not found: " + path.string());
    settings = read_key_values(path.string());
  }
  if (o.backbone) settings["backbone"] = *o.backbone;
  if (o.ablate) settings["ablate"] = *o.ablate;
  if (o.item_source) settings["item_source"] = *o.item_source;
  if (o.seed) settings["seed"] = std::to_string(*o.seed);
  if (o.alpha) settings["alpha"] = text::from_double(*o.alpha);
  if (o.epochs) settings["max_epochs"] = std::to_string(*o.epochs);

  RunConfig base;
  base.model.num_items = dataset.num_items();
  if (auto it = stats.find("max_len"); it != stats.end()) base.model.backbone.max_len = text::to_u64("max_len", it->second);
  // The semantic width comes from the cache, so resolve it before the config.
  const bool ids = settings.count("item_source") && settings.at("item_source") == "id";
  CacheHandle cache;
  if (!ids) {
    cache = find_cache(ws, o.dataset, o.cache);
    base.model.input_dim = cache.dimension;
  }
  const RunConfig rc = run_config_from_map(settings, base);
  std::shared_ptr<const SemanticTable> semantics;
  if (rc.model.item_source == ItemSource::semantic) semantics = load_semantics(ws, o.dataset, cache, dataset.items);

  std::string run = o.run;
  if (run.empty()) {
    run = o.dataset + "-" + std::string(backbone_name(rc.model.backbone.kind)) + "-" +
          (rc.model.item_source == ItemSource::id ? "id" : ablation_string(rc.model.ablations)) + "-a" +
          text::from_double(rc.train.alpha) + "-s" + std::to_string(rc.train.seed);
    std::replace(run.begin(), run.end(), ',', '+');
  }
  require_name("run", run);
  const auto dir = ws.run_dir(run);
  DirectoryLock lock(dir);
  RunManifest manifest("train", ws);
  const auto config_map = run_config_to_map(rc);
  manifest.config(config_map);
  manifest.seed(rc.train.seed);
  manifest.input("dataset", o.dataset);
  manifest.input("dataset_hash",
                 hash_files({data_dir / "items.txt", data_dir / "sequences.txt", data_dir / "valid.tsv"}));
  if (semantics) manifest.input("cache_fingerprint", cache.fingerprint);

  const LeaveOneOutSplit split = leave_one_out_split(dataset);
  const auto valid = load_instances((data_dir / "valid.tsv").string());
  DmesrModel model(rc.model, semantics);

  std::ofstream log(dir / "epochs.jsonl", std::ios::trunc);
  if (!log) throw Error("cannot write " + (dir / "epochs.jsonl").string());
  manifest.artifact(dir / "epochs.jsonl");
  write_text(dir / "config.txt", format_key_values(config_map));
  manifest.artifact(dir / "config.txt");

  FitResult result;
  try {
    result = fit(model, split.train, valid, rc.train, [&](const EpochRecord& rec) {
      log << rec.to_json() << '\n' << std::flush;
      out << rec.to_json() << '\n';
    });
  } catch (...) {
    manifest.write(dir, "failed");
    throw;
  }

  auto metadata = config_map;
  metadata["dataset"] = o.dataset;
  metadata["cache_fingerprint"] = semantics ? cache.fingerprint : "";
  metadata["cache_dimension"] = std::to_string(cache.dimension);
  metadata["best_epoch"] = std::to_string(result.best_epoch);
  metadata["best_valid_ndcg"] = text::from_double(result.best_valid_ndcg);
  save_model((dir / "model.ckpt").string(), model, metadata);
  manifest.artifact(dir / "model.ckpt");
  manifest.write(dir);
  out << "trained " << run << ": epochs=" << result.log.size() << " best_epoch=" << result.best_epoch
      << " best_valid_N@" << rc.train.eval_k << "=" << fixed(result.best_valid_ndcg)
      << " checkpoint=" << ws.relative(dir / "model.ckpt") << '\n';
}

void cmd_eval(const Workspace& ws, const EvalOptions& o, std::ostream& out) {
  if (o.split != "valid" && o.split != "test") throw Error("--split must be valid or test, got '" + o.split + "'");
  const auto ckpt_path = ws.resolve(o.checkpoint);
  if (!fs::exists(ckpt_path)) throw Error("checkpoint not found: " + ckpt_path.string());
  const Checkpoint cp = load_checkpoint(ckpt_path.string());
  auto meta = [&](const std::string& key) -> std::string {
    auto it = cp.metadata.find(key);
    if (it == cp.metadata.end()) throw Error("checkpoint " + ckpt_path.string() + " lacks '" + key + "'");
    return it->second;
  };
  const std::string dataset_name = meta("dataset");
  const SequenceDataset dataset = load_dataset(ws, dataset_name);
  const ModelConfig mc = model_config_from_map(cp.metadata);
  if (mc.num_items != dataset.num_items()) {
    throw Error("checkpoint expects " + std::to_string(mc.num_items) + " items, dataset '" + dataset_name + "' has " +
                std::to_string(dataset.num_items()));
  }
  std::shared_ptr<const SemanticTable> semantics;
  if (mc.item_source == ItemSource::semantic) {
    semantics = load_semantics(ws, dataset_name, find_cache(ws, dataset_name, meta("cache_fingerprint")),
                               dataset.items);
  }
  DmesrModel model(mc, semantics);
  restore(model.parameters(), cp);

  const auto data_dir = ws.dataset_dir(dataset_name);
  const auto instances = load_instances((data_dir / (o.split + ".tsv")).string());
  const std::size_t k = cp.metadata.count("eval_k") ? text::to_u64("eval_k", meta("eval_k")) : 10;
  EvalReport report = evaluate(model, instances, k);
  if (o.tail_report) {
    const auto popularity = training_popularity(leave_one_out_split(dataset), dataset.num_items());
    report.tail = long_tail_report(report.outcomes, long_tail_partition(popularity, o.head_fraction), k);
  }

  const auto dir = ckpt_path.parent_path() / ("eval-" + o.split);
  DirectoryLock lock(dir);
  RunManifest manifest("eval", ws);
  manifest.config({{"split", o.split},
                   {"tail_report", text::from_bool(o.tail_report)},
                   {"head_fraction", text::from_double(o.head_fraction)}});
  manifest.seed(text::to_u64("seed", meta("seed")));
  manifest.input("checkpoint", ws.relative(ckpt_path));
  manifest.input("checkpoint_hash", hash_files({ckpt_path}));
  manifest.input("instances_hash", hash_files({data_dir / (o.split + ".tsv")}));

  const std::string ks = std::to_string(k);
  ordered_json j;
  j["dataset"] = dataset_name;
  j["backbone"] = meta("backbone");
  j["item_source"] = meta("item_source");
  j["ablations"] = meta("ablate");
  j["seed"] = text::to_u64("seed", meta("seed"));
  j["alpha"] = text::to_double("alpha", meta("alpha"));
  j["split"] = o.split;
  j["k"] = k;
  j["HR@" + ks] = report.overall.hr;
  j["N@" + ks] = report.overall.ndcg;
  j["count"] = report.overall.count;
  if (report.tail) {
    j["tail_count"] = report.tail->count;
    j["tail_defined"] = report.tail->defined();
    j["tail_HR@" + ks] = report.tail->defined() ? json(report.tail->hr) : json(nullptr);
    j["tail_N@" + ks] = report.tail->defined() ? json(report.tail->ndcg) : json(nullptr);
  }
  j["definitions"] = report.definitions();
  j["checkpoint"] = ws.relative(ckpt_path);
  write_text(dir / "report.json", j.dump(2) + "\n");

  std::ostringstream ranks;
  ranks << "user\ttarget\trank\n";
  for (const auto& r : report.outcomes) {
    ranks << dataset.users.raw(r.user) << '\t' << dataset.items.raw(r.target) << '\t' << r.rank << '\n';
  }
  write_text(dir / "ranks.tsv", ranks.str());
  manifest.artifact(dir / "report.json");
  manifest.artifact(dir / "ranks.tsv");
  manifest.write(dir);
  out << j.dump() << '\n';
}

void cmd_report(const Workspace& ws, const ReportOptions& o, std::ostream& out) {
  if (o.inputs.empty()) throw Error("report needs at least one --inputs path");
  require_name("report", o.name);

  struct Row {
    std::string dataset, backbone, variant;
    double alpha = 0;
    std::size_t runs = 0;
    double hr = 0, ndcg = 0;
    std::size_t tail_runs = 0;
    double tail_hr = 0, tail_ndcg = 0;
  };
  std::map<std::tuple<std::string, std::string, std::string, double>, Row> groups;
  std::vector<fs::path> sources;
  std::optional<std::size_t> k;
  for (const auto& input : o.inputs) {
    fs::path p = ws.resolve(input);
    if (fs::is_directory(p)) p /= "report.json";
    if (!fs::exists(p)) throw Error("evaluation report not found: " + p.string());
    const json j = read_json(p);
    sources.push_back(p);
    const std::size_t rk = j.at("k").get<std::size_t>();
    if (k && *k != rk) throw Error("reports use different cut-offs (" + std::to_string(*k) + " and " + std::to_string(rk) + ")");
    k = rk;
    const std::string ks = std::to_string(rk);
    std::string variant = j.value("item_source", "semantic") == "id" ? "ID" : j.at("ablations").get<std::string>();
    if (variant == "none") variant = "DMESR";
    const auto key = std::make_tuple(j.at("dataset").get<std::string>(), j.at("backbone").get<std::string>(), variant,
                                     j.at("alpha").get<double>());
    Row& row = groups[key];
    row.dataset = std::get<0>(key);
    row.backbone = std::get<1>(key);
    row.variant = variant;
    row.alpha = std::get<3>(key);
    ++row.runs;
    row.hr += j.at("HR@" + ks).get<double>();
    row.ndcg += j.at("N@" + ks).get<double>();
    if (j.value("tail_defined", false)) {
      ++row.tail_runs;
      row.tail_hr += j.at("tail_HR@" + ks).get<double>();
      row.tail_ndcg += j.at("tail_N@" + ks).get<double>();
    }
  }
  const std::string ks = std::to_string(*k);

  const auto dir = ws.report_dir(o.name);
  DirectoryLock lock(dir);
  RunManifest manifest("report", ws);
  manifest.config({{"inputs", std::to_string(o.inputs.size())}});
  for (std::size_t i = 0; i < sources.size(); ++i) manifest.input("report" + std::to_string(i), ws.relative(sources[i]));

  std::ostringstream table, tail;
  table << "variant\tdataset\tbackbone\talpha\truns\tH@" << ks << "\tN@" << ks << '\n';
  tail << "variant\tdataset\tbackbone\talpha\toverall_H@" << ks << "\ttail_H@" << ks << "\toverall_N@" << ks
       << "\ttail_N@" << ks << '\n';
  bool any_tail = false;
  std::map<std::pair<std::string, std::string>, std::map<double, std::pair<double, double>>> alpha_series;
  for (auto& [key, row] : groups) {
    const double n = static_cast<double>(row.runs);
    table << row.variant << '\t' << row.dataset << '\t' << row.backbone << '\t' << text::from_double(row.alpha) << '\t'
          << row.runs << '\t' << fixed(row.hr / n) << '\t' << fixed(row.ndcg / n) << '\n';
    if (row.tail_runs > 0) {
      any_tail = true;
      const double t = static_cast<double>(row.tail_runs);
      tail << row.variant << '\t' << row.dataset << '\t' << row.backbone << '\t' << text::from_double(row.alpha)
           << '\t' << fixed(row.hr / n) << '\t' << fixed(row.tail_hr / t) << '\t' << fixed(row.ndcg / n) << '\t'
           << fixed(row.tail_ndcg / t) << '\n';
    }
    if (row.variant == "DMESR") alpha_series[{row.dataset, row.backbone}][row.alpha] = {row.hr / n, row.ndcg / n};
  }
  write_text(dir / "table.tsv", table.str());
  manifest.artifact(dir / "table.tsv");
  if (any_tail) {
    write_text(dir / "tail.tsv", tail.str());
    manifest.artifact(dir / "tail.tsv");
  }
  std::ostringstream series;
  series << "dataset\tbackbone\talpha\tH@" << ks << "\tN@" << ks << '\n';
  bool any_series = false;
  for (const auto& [key, points] : alpha_series) {
    if (points.size() < 2) continue;
    any_series = true;
    for (const auto& [alpha, m] : points) {
      series << key.first << '\t' << key.second << '\t' << text::from_double(alpha) << '\t' << fixed(m.first) << '\t'
             << fixed(m.second) << '\n';
    }
  }
  if (any_series) {
    write_text(dir / "alpha_series.tsv", series.str());
    manifest.artifact(dir / "alpha_series.tsv");
  }
  manifest.write(dir);
  out << table.str();
}

}  // namespace dmesr::cli
