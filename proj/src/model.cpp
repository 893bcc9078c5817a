// SPDX-License-Identifier: Apache-2.0
#include "dmesr/model.hpp"

#include <sstream>

#include "dmesr/error.hpp"
#include "dmesr/init.hpp"
#include "dmesr/ops.hpp"
#include "text_values.hpp"

namespace dmesr {

Ablations parse_ablations(std::string_view list) {
  Ablations a;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = std::min(list.find(',', start), list.size());
    const std::string token(list.substr(start, comma - start));
    start = comma + 1;
    if (token.empty() || token == "none") continue;
    if (token == "no_cl") a.no_cl = true;
    else if (token == "no_ca") a.no_ca = true;
    else if (token == "no_ori_view") a.no_ori_view = true;
    else if (token == "no_twp") a.no_twp = true;
    else throw Error("unknown ablation '" + token + "' (expected no_cl, no_ca, no_ori_view or no_twp)");
  }
  return a;
}

std::string ablation_string(const Ablations& a) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(a.no_cl, "no_cl");
  add(a.no_ca, "no_ca");
  add(a.no_ori_view, "no_ori_view");
  add(a.no_twp, "no_twp");
  return out.empty() ? "none" : out;
}

std::map<std::string, std::string> model_config_to_map(const ModelConfig& c) {
  return {
      {"input_dim", std::to_string(c.input_dim)},
      {"width", std::to_string(c.width)},
      {"num_items", std::to_string(c.num_items)},
      {"backbone", std::string(backbone_name(c.backbone.kind))},
      {"layers", std::to_string(c.backbone.layers)},
      {"heads", std::to_string(c.backbone.heads)},
      {"max_len", std::to_string(c.backbone.max_len)},
      {"dropout", text::from_double(c.backbone.dropout)},
      {"shared_backbone", text::from_bool(c.shared_backbone)},
      {"fusion_causal", text::from_bool(c.fusion.causal)},
      {"fusion_residual", text::from_bool(c.fusion.residual)},
      {"ablate", ablation_string(c.ablations)},
      {"item_source", c.item_source == ItemSource::id ? "id" : "semantic"},
      {"model_seed", std::to_string(c.seed)},
  };
}

ModelConfig model_config_from_map(const std::map<std::string, std::string>& values) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  if (auto v = get("input_dim")) c.input_dim = text::to_u64("input_dim", *v);
  if (auto v = get("width")) c.width = text::to_u64("width", *v);
  if (auto v = get("num_items")) c.num_items = text::to_u64("num_items", *v);
  if (auto v = get("backbone")) {
    c.backbone.kind = parse_backbone(*v);
    if (c.backbone.kind == BackboneKind::recurrent) c.backbone.layers = 1;
  }
  if (auto v = get("layers")) c.backbone.layers = text::to_u64("layers", *v);
  if (auto v = get("heads")) c.backbone.heads = text::to_u64("heads", *v);
  if (auto v = get("max_len")) c.backbone.max_len = text::to_u64("max_len", *v);
  if (auto v = get("dropout")) c.backbone.dropout = text::to_double("dropout", *v);
  if (auto v = get("shared_backbone")) c.shared_backbone = text::to_bool("shared_backbone", *v);
  if (auto v = get("fusion_causal")) c.fusion.causal = text::to_bool("fusion_causal", *v);
  if (auto v = get("fusion_residual")) c.fusion.residual = text::to_bool("fusion_residual", *v);
  if (auto v = get("ablate")) c.ablations = parse_ablations(*v);
  if (auto v = get("item_source")) {
    if (*v == "id") c.item_source = ItemSource::id;
    else if (*v == "semantic") c.item_source = ItemSource::semantic;
    else throw Error("setting 'item_source': expected semantic or id, got '" + *v + "'");
  }
  if (auto v = get("model_seed")) c.seed = text::to_u64("model_seed", *v);
  return c;
}

namespace {

Tensor rows_of(const Tensor& table, std::span<const ItemId> items) {
  const std::size_t d = table.cols();
  Tensor out = Tensor::zeros(items.size(), d);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] >= table.rows()) throw Error("item id " + std::to_string(items[i]) + " outside the catalog");
    const auto src = table.row(items[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

SemanticTable SemanticTable::from_records(std::span<const SemanticRecord> records, const IdMap& items,
                                          std::size_t dim) {
  SemanticTable table;
  for (auto& t : table.routes) t = Tensor::zeros(items.size(), dim);
  std::vector<std::array<bool, 4>> seen(items.size(), {false, false, false, false});
  for (const auto& rec : records) {
    if (!items.contains(rec.item)) continue;
    if (rec.embedding.size() != dim) {
      throw Error("item " + rec.item + " route " + std::string(route_name(rec.route)) + ": dimension " +
                  std::to_string(rec.embedding.size()) + ", expected " + std::to_string(dim));
    }
    const auto id = items.dense(rec.item);
    auto row = table.routes[static_cast<std::size_t>(rec.route)].row(id);
    std::copy(rec.embedding.begin(), rec.embedding.end(), row.begin());
    seen[id][static_cast<std::size_t>(rec.route)] = true;
  }
  for (std::uint32_t id = 0; id < items.size(); ++id) {
    for (Route r : kAllRoutes) {
      if (!seen[id][static_cast<std::size_t>(r)]) {
        throw Error("no semantic record for item " + items.raw(id) + " route " + std::string(route_name(r)));
      }
    }
  }
  return table;
}

SemanticTable SemanticTable::from_cache(const EmbeddingCache& cache, const IdMap& items) {
  SemanticTable table;
  for (auto& t : table.routes) t = Tensor::zeros(items.size(), cache.dimension());
  for (std::uint32_t id = 0; id < items.size(); ++id) {
    for (Route r : kAllRoutes) {
      const auto rec = cache.get(items.raw(id), r);
      if (!rec) {
        throw Error("no semantic record for item " + items.raw(id) + " route " + std::string(route_name(r)));
      }
      auto row = table.routes[static_cast<std::size_t>(r)].row(id);
      std::copy(rec->embedding.begin(), rec->embedding.end(), row.begin());
    }
  }
  return table;
}

DmesrModel::DmesrModel(ModelConfig config, std::shared_ptr<const SemanticTable> semantics)
    : config_(std::move(config)), semantics_(std::move(semantics)) {
  config_.backbone.width = config_.width;
  if (config_.width == 0) throw Error("model width must be positive");
  if (config_.num_items == 0) throw Error("model needs a non-empty catalog");
  std::mt19937_64 rng(config_.seed);
  if (dual_view()) {
    if (!semantics_) throw Error("semantic model needs a semantic table");
    if (semantics_->num_items() != config_.num_items || semantics_->input_dim() != config_.input_dim) {
      throw Error("semantic table is " + std::to_string(semantics_->num_items()) + " x " +
                  std::to_string(semantics_->input_dim()) + ", model expects " + std::to_string(config_.num_items) +
                  " x " + std::to_string(config_.input_dim));
    }
  }
  // Every parameter group is created in a fixed order so a seed fully
  // determines the initial state regardless of ablations.
  for (Route r : kAllRoutes) {
    adapters_[static_cast<std::size_t>(r)] = std::make_unique<Adapter>(
        "adapter." + std::string(route_name(r)), config_.input_dim, config_.width, rng);
  }
  refine_coarse_ = std::make_unique<AttentionProjections>("fusion.coarse", config_.width, rng);
  refine_fine_ = std::make_unique<AttentionProjections>("fusion.fine", config_.width, rng);
  coarse_backbone_ = make_backbone(config_.shared_backbone ? "backbone" : "backbone.coarse", config_.backbone, rng);
  if (!config_.shared_backbone) fine_backbone_ = make_backbone("backbone.fine", config_.backbone, rng);
  if (!dual_view()) {
    item_table_ = std::make_unique<Parameter>("item_embedding", normal_init(config_.num_items, config_.width,
                                                                            1.0 / std::sqrt(config_.width), rng));
  }
}

bool DmesrModel::uses_alignment() const {
  return dual_view() && !config_.ablations.no_cl && !config_.ablations.no_twp;
}

ItemViews DmesrModel::item_views(std::span<const ItemId> items) const {
  if (!dual_view()) {
    for (ItemId id : items) {
      if (id >= config_.num_items) throw Error("item id " + std::to_string(id) + " outside the catalog");
    }
    const std::vector<std::size_t> rows(items.begin(), items.end());
    return {gather_rows(item_table_->var(), rows), Var()};
  }
  ItemViews v;
  v.coarse = adapters_[0]->forward(constant(rows_of(semantics_->route(Route::text), items)));
  if (config_.ablations.no_ori_view) {
    v.fine = v.coarse;
  } else {
    v.fine = adapters_[3]->forward(constant(rows_of(semantics_->route(Route::original_text), items)));
  }
  return v;
}

Var DmesrModel::alignment_loss(std::span<const ItemId> items, double tau) const {
  if (!dual_view()) throw Error("the id baseline has no alignment loss");
  const Var text = adapters_[0]->forward(constant(rows_of(semantics_->route(Route::text), items)));
  const Var visual = adapters_[1]->forward(constant(rows_of(semantics_->route(Route::visual), items)));
  const Var hybrid = adapters_[2]->forward(constant(rows_of(semantics_->route(Route::hybrid), items)));
  return total_alignment_loss(text, visual, hybrid, tau);
}

SequenceStates DmesrModel::encode(const ItemViews& sequence, std::mt19937_64* dropout_rng) const {
  if (!dual_view()) return {coarse_backbone_->forward(sequence.coarse, {}, dropout_rng), Var()};
  Var coarse = sequence.coarse, fine = sequence.fine;
  if (!config_.ablations.no_ca) {
    auto fused = fuse_bidirectional(coarse, fine, *refine_coarse_, *refine_fine_, {}, config_.fusion);
    coarse = fused.coarse;
    fine = fused.fine;
  }
  const Backbone& fine_backbone = fine_backbone_ ? *fine_backbone_ : *coarse_backbone_;
  return {coarse_backbone_->forward(coarse, {}, dropout_rng), fine_backbone.forward(fine, {}, dropout_rng)};
}

ParameterList DmesrModel::parameters() {
  ParameterList out;
  for (auto& a : adapters_)
    for (Parameter* p : a->parameters()) out.push_back(p);
  for (Parameter* p : refine_coarse_->parameters()) out.push_back(p);
  for (Parameter* p : refine_fine_->parameters()) out.push_back(p);
  for (Parameter* p : coarse_backbone_->parameters()) out.push_back(p);
  if (fine_backbone_)
    for (Parameter* p : fine_backbone_->parameters()) out.push_back(p);
  if (item_table_) out.push_back(item_table_.get());
  return out;
}

double score(std::span<const double> cand_coarse, std::span<const double> cand_fine,
             std::span<const double> user_coarse, std::span<const double> user_fine) {
  if (cand_coarse.size() != user_coarse.size() || cand_fine.size() != user_fine.size()) {
    throw ShapeError("score: candidate and user widths differ");
  }
  return dot(cand_coarse, user_coarse) + dot(cand_fine, user_fine);
}

Var score_candidates(const Var& cand_coarse, const Var& cand_fine, const Var& user_coarse, const Var& user_fine) {
  Var s = matmul_nt(cand_coarse, user_coarse);
  if (cand_fine.defined() != user_fine.defined()) throw Error("score_candidates: fine view given on one side only");
  if (cand_fine.defined()) s = add(s, matmul_nt(cand_fine, user_fine));
  return s;
}

Var score_positions(const SequenceStates& states, const ItemViews& candidates) {
  Var s = row_sums(mul(states.coarse, candidates.coarse));
  if (states.fine.defined()) s = add(s, row_sums(mul(states.fine, candidates.fine)));
  return s;
}

void save_model(const std::string& path, DmesrModel& model, std::map<std::string, std::string> metadata) {
  Checkpoint cp = snapshot(model.parameters());
  cp.metadata = std::move(metadata);
  for (auto& [k, v] : model_config_to_map(model.config())) cp.metadata[k] = v;
  save_checkpoint(path, cp);
}

std::unique_ptr<DmesrModel> load_model(const std::string& path, std::shared_ptr<const SemanticTable> semantics,
                                       std::map<std::string, std::string>* metadata) {
  const Checkpoint cp = load_checkpoint(path);
  ModelConfig config = model_config_from_map(cp.metadata);
  if (config.item_source == ItemSource::id) semantics.reset();
  auto model = std::make_unique<DmesrModel>(config, std::move(semantics));
  restore(model->parameters(), cp);
  if (metadata) *metadata = cp.metadata;
  return model;
}

}  // namespace dmesr
