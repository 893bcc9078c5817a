// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "dmesr/backbones.hpp"
#include "dmesr/checkpoint.hpp"
#include "dmesr/dataset.hpp"
#include "dmesr/enhancement.hpp"
#include "dmesr/fusion.hpp"
#include "dmesr/semantics.hpp"

namespace dmesr {

struct Ablations {
  bool no_cl = false;        // no alignment loss; visual and hybrid routes unused
  bool no_ca = false;        // fusion replaced by the identity
  bool no_ori_view = false;  // fine view replaced by a copy of the coarse view
  bool no_twp = false;       // text route only, no alignment

  bool any() const { return no_cl || no_ca || no_ori_view || no_twp; }
  bool operator==(const Ablations&) const = default;
};

/// Comma-separated flag names; empty or "none" means no ablation.
Ablations parse_ablations(std::string_view list);
std::string ablation_string(const Ablations& ablations);  // "none" when empty

/// Where item representations come from. `id` is a plain learned embedding
/// table with a single view, used as the no-semantics baseline.
enum class ItemSource { semantic, id };

struct ModelConfig {
  std::size_t input_dim = 1536;  // encoder output width
  std::size_t width = 128;       // model width
  std::size_t num_items = 0;
  BackboneConfig backbone;       // width is overridden by `width`
  bool shared_backbone = true;
  FusionOptions fusion{true, false};
  Ablations ablations;
  ItemSource item_source = ItemSource::semantic;
  std::uint64_t seed = 42;
};

std::map<std::string, std::string> model_config_to_map(const ModelConfig& config);
ModelConfig model_config_from_map(const std::map<std::string, std::string>& values);

/// Encoder outputs of every item and route, one [num_items x input_dim]
/// matrix per route, rows indexed by dense item id.
struct SemanticTable {
  std::array<Tensor, 4> routes;

  std::size_t num_items() const { return routes[0].rows(); }
  std::size_t input_dim() const { return routes[0].cols(); }
  const Tensor& route(Route r) const { return routes[static_cast<std::size_t>(r)]; }

  /// Throws naming the item and route of the first missing record.
  static SemanticTable from_cache(const EmbeddingCache& cache, const IdMap& items);
  static SemanticTable from_records(std::span<const SemanticRecord> records, const IdMap& items, std::size_t dim);
};

/// Pre-fusion item representations; rows follow the requested item order.
struct ItemViews {
  Var coarse;
  Var fine;  // undefined for the id baseline
};

/// Per-position user states for one sequence.
struct SequenceStates {
  Var coarse;  // [L x d]
  Var fine;    // [L x d], undefined for the id baseline
};

class DmesrModel {
 public:
  DmesrModel(ModelConfig config, std::shared_ptr<const SemanticTable> semantics);
  DmesrModel(const DmesrModel&) = delete;
  DmesrModel& operator=(const DmesrModel&) = delete;

  const ModelConfig& config() const { return config_; }
  bool dual_view() const { return config_.item_source == ItemSource::semantic; }
  bool uses_alignment() const;

  ItemViews item_views(std::span<const ItemId> items) const;
  /// Alignment loss over the adapted text, visual and hybrid rows of `items`.
  Var alignment_loss(std::span<const ItemId> items, double tau) const;
  /// Fuses (unless ablated) and encodes the two views of a sequence.
  SequenceStates encode(const ItemViews& sequence, std::mt19937_64* dropout_rng) const;

  ParameterList parameters();
  Adapter& adapter(Route route) { return *adapters_.at(static_cast<std::size_t>(route)); }
  const SemanticTable& semantics() const { return *semantics_; }

 private:
  ModelConfig config_;
  std::shared_ptr<const SemanticTable> semantics_;
  std::array<std::unique_ptr<Adapter>, 4> adapters_;
  std::unique_ptr<AttentionProjections> refine_coarse_;
  std::unique_ptr<AttentionProjections> refine_fine_;
  std::unique_ptr<Backbone> coarse_backbone_;
  std::unique_ptr<Backbone> fine_backbone_;  // null when shared
  std::unique_ptr<Parameter> item_table_;    // id baseline only
};

/// cand_coarse . u_coarse + cand_fine . u_fine
double score(std::span<const double> cand_coarse, std::span<const double> cand_fine,
             std::span<const double> user_coarse, std::span<const double> user_fine);

/// Scores of candidate rows [n x d] against one user state [1 x d] per view;
/// returns [n x 1]. `cand_fine` / `user_fine` may be undefined together.
Var score_candidates(const Var& cand_coarse, const Var& cand_fine, const Var& user_coarse, const Var& user_fine);

/// Row-wise scores of position states against per-position candidates.
Var score_positions(const SequenceStates& states, const ItemViews& candidates);

void save_model(const std::string& path, DmesrModel& model, std::map<std::string, std::string> metadata = {});
std::unique_ptr<DmesrModel> load_model(const std::string& path, std::shared_ptr<const SemanticTable> semantics,
                                       std::map<std::string, std::string>* metadata = nullptr);

}  // namespace dmesr
