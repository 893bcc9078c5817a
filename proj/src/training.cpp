// SPDX-License-Identifier: Apache-2.0
#include "dmesr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "dmesr/evaluation.hpp"
#include "dmesr/ops.hpp"
#include "dmesr/optim.hpp"
#include "text_values.hpp"

namespace dmesr {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw Error("learning rate must be positive");
  if (batch_size == 0) throw Error("batch size must be positive");
  if (patience == 0) throw Error("patience must be at least 1");
  if (!(alpha >= 0)) throw Error("alpha must be non-negative");
  if (!(tau > 0)) throw Error("tau must be positive");
  if (!(clip_norm > 0)) throw Error("clip norm must be positive");
  if (align_cap < 2) throw Error("alignment cap must be at least 2");
  if (eval_k == 0) throw Error("eval k must be positive");
}

RunConfig run_config_from_map(const std::map<std::string, std::string>& values, RunConfig base) {
  static const char* kModelKeys[] = {"input_dim",       "width",         "backbone",        "layers",
                                     "heads",           "max_len",       "dropout",         "shared_backbone",
                                     "fusion_causal",   "fusion_residual", "ablate",        "item_source",
                                     "model_seed"};
  std::map<std::string, std::string> model_values = model_config_to_map(base.model);
  // A backbone switch resets the layer count the new kind defaults to.
  if (values.count("backbone") && !values.count("layers")) model_values.erase("layers");
  for (const auto& [key, value] : values) {
    auto& t = base.train;
    if (key == "learning_rate" || key == "lr") t.learning_rate = text::to_double(key, value);
    else if (key == "batch_size") t.batch_size = text::to_u64(key, value);
    else if (key == "max_epochs") t.max_epochs = text::to_u64(key, value);
    else if (key == "patience") t.patience = text::to_u64(key, value);
    else if (key == "alpha") t.alpha = text::to_double(key, value);
    else if (key == "tau") t.tau = text::to_double(key, value);
    else if (key == "seed") t.seed = text::to_u64(key, value);
    else if (key == "clip_norm") t.clip_norm = text::to_double(key, value);
    else if (key == "align_cap") t.align_cap = text::to_u64(key, value);
    else if (key == "eval_k") t.eval_k = text::to_u64(key, value);
    else if (std::find(std::begin(kModelKeys), std::end(kModelKeys), key) != std::end(kModelKeys)) {
      model_values[key] = value;
    } else {
      throw Error("unknown setting '" + key + "'");
    }
  }
  const auto num_items = base.model.num_items;
  if (!values.count("model_seed")) model_values["model_seed"] = std::to_string(base.train.seed);
  base.model = model_config_from_map(model_values);
  base.model.num_items = num_items;
  base.train.validate();
  return base;
}

std::map<std::string, std::string> run_config_to_map(const RunConfig& config) {
  auto out = model_config_to_map(config.model);
  out.erase("num_items");
  const auto& t = config.train;
  out["learning_rate"] = text::from_double(t.learning_rate);
  out["batch_size"] = std::to_string(t.batch_size);
  out["max_epochs"] = std::to_string(t.max_epochs);
  out["patience"] = std::to_string(t.patience);
  out["alpha"] = text::from_double(t.alpha);
  out["tau"] = text::from_double(t.tau);
  out["seed"] = std::to_string(t.seed);
  out["clip_norm"] = text::from_double(t.clip_norm);
  out["align_cap"] = std::to_string(t.align_cap);
  out["eval_k"] = std::to_string(t.eval_k);
  return out;
}

Var srs_loss(const Var& positive_scores, const Var& negative_scores) {
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const Var pos = log_clamped(sigmoid(positive_scores), lo, hi);
  const Var neg = log_clamped(sigmoid(scale(negative_scores, -1.0)), lo, hi);
  return scale(add(sum(pos), sum(neg)), -1.0);
}

TrainExample make_example(const TrainSequence& sequence, std::size_t catalog_size, std::size_t max_len,
                          std::mt19937_64& rng) {
  const auto& items = sequence.items;
  if (items.size() < 2) throw Error("user " + std::to_string(sequence.user) + " has no training targets");
  std::size_t first = 0;
  if (max_len > 0 && items.size() - 1 > max_len) first = items.size() - 1 - max_len;
  TrainExample ex;
  ex.user = sequence.user;
  ex.inputs.assign(items.begin() + static_cast<std::ptrdiff_t>(first), items.end() - 1);
  ex.positives.assign(items.begin() + static_cast<std::ptrdiff_t>(first) + 1, items.end());
  ex.negatives = sample_negatives_with_replacement(items, catalog_size, ex.inputs.size(), rng,
                                                   "user " + std::to_string(sequence.user));
  return ex;
}

BatchLoss forward_batch(const DmesrModel& model, std::span<const TrainExample> batch, const TrainConfig& config,
                        std::mt19937_64* dropout_rng) {
  if (batch.empty()) throw Error("empty training batch");
  // Adapt every item the batch touches once, then gather per sequence.
  std::vector<ItemId> unique;
  std::unordered_map<ItemId, std::size_t> slot;
  auto note = [&](std::span<const ItemId> items) {
    for (ItemId i : items) {
      if (slot.emplace(i, unique.size()).second) unique.push_back(i);
    }
  };
  for (const auto& ex : batch) {
    note(ex.inputs);
    note(ex.positives);
    note(ex.negatives);
  }
  const ItemViews views = model.item_views(unique);
  auto gather = [&](std::span<const ItemId> items) {
    std::vector<std::size_t> idx;
    idx.reserve(items.size());
    for (ItemId i : items) idx.push_back(slot.at(i));
    ItemViews out{gather_rows(views.coarse, idx), Var()};
    if (views.fine.defined()) out.fine = gather_rows(views.fine, idx);
    return out;
  };

  Var srs;
  for (const auto& ex : batch) {
    if (ex.inputs.empty() || ex.inputs.size() != ex.positives.size() || ex.inputs.size() != ex.negatives.size()) {
      throw Error("malformed training example for user " + std::to_string(ex.user));
    }
    const SequenceStates states = model.encode(gather(ex.inputs), dropout_rng);
    const Var part = srs_loss(score_positions(states, gather(ex.positives)),
                              score_positions(states, gather(ex.negatives)));
    srs = srs.defined() ? add(srs, part) : part;
  }

  BatchLoss out;
  out.total = srs;
  out.parts.srs = srs.item();
  if (model.uses_alignment()) {
    std::vector<std::vector<ItemId>> sequences;
    sequences.reserve(batch.size());
    for (const auto& ex : batch) sequences.push_back(ex.inputs);
    const AlignmentBatch ab = build_alignment_batch(sequences, config.align_cap);
    if (!ab.skipped) {
      const Var align = model.alignment_loss(ab.items, config.tau);
      out.parts.align = align.item();
      if (config.alpha != 0.0) out.total = add(srs, scale(align, config.alpha));
    }
  }
  out.parts.total = out.parts.srs + config.alpha * out.parts.align;
  return out;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw Error("patience must be at least 1");
}

bool EarlyStopping::update(double metric) {
  ++epoch_;
  if (best_epoch_ == 0 || metric > best_) {
    best_ = metric;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

namespace {

std::string describe_parts(std::size_t epoch, std::size_t batch, const LossBreakdown& p) {
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << " batch " << batch << ": L_SRS=" << p.srs << " L_align=" << p.align
     << " total=" << p.total;
  return os.str();
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(std::size_t epoch_, std::size_t batch_, const LossBreakdown& parts_)
    : Error(describe_parts(epoch_, batch_, parts_)), epoch(epoch_), batch(batch_), parts(parts_) {}

std::string EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["L_SRS"] = loss.srs;
  j["L_align"] = loss.align;
  j["total"] = loss.total;
  j["valid_HR@10"] = valid_hr;
  j["valid_N@10"] = valid_ndcg;
  j["seconds"] = seconds;
  return j.dump();
}

FitResult fit(DmesrModel& model, std::span<const TrainSequence> train, std::span<const EvalInstance> valid,
              const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  std::vector<const TrainSequence*> usable;
  for (const auto& s : train) {
    if (s.items.size() >= 2) usable.push_back(&s);
  }
  if (usable.empty()) throw Error("no training sequence has a next-item target");

  const ParameterList params = model.parameters();
  const AdamConfig adam{config.learning_rate};
  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 negative_rng(config.seed ^ 0x6e656773ULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0x64726f70ULL);
  const std::size_t catalog = model.config().num_items;
  const std::size_t max_len = model.config().backbone.max_len;

  FitResult result;
  EarlyStopping stopper(config.patience);
  Checkpoint best = snapshot(params);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(usable.begin(), usable.end(), order_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < usable.size(); begin += config.batch_size) {
      const std::size_t end = std::min(usable.size(), begin + config.batch_size);
      std::vector<TrainExample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(make_example(*usable[i], catalog, max_len, negative_rng));

      zero_grad(params);
      const BatchLoss loss = forward_batch(model, batch, config, &dropout_rng);
      ++batches;
      if (!std::isfinite(loss.parts.total) || !std::isfinite(loss.parts.srs) || !std::isfinite(loss.parts.align)) {
        throw NonFiniteLoss(epoch, batches, loss.parts);
      }
      backward(loss.total);
      clip_grad_norm(params, config.clip_norm);
      adam_step(params, adam);
      rec.loss.srs += loss.parts.srs;
      rec.loss.align += loss.parts.align;
      rec.loss.total += loss.parts.total;
    }
    rec.loss.srs /= static_cast<double>(batches);
    rec.loss.align /= static_cast<double>(batches);
    rec.loss.total /= static_cast<double>(batches);

    if (!valid.empty()) {
      const EvalReport report = evaluate(model, valid, config.eval_k);
      rec.valid_hr = report.overall.hr;
      rec.valid_ndcg = report.overall.ndcg;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(rec.valid_ndcg)) best = snapshot(params);
    if (stopper.should_stop()) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  restore(params, best);
  result.best_epoch = stopper.best_epoch();
  result.best_valid_ndcg = stopper.best_metric();
  return result;
}

}  // namespace dmesr
