// SPDX-License-Identifier: Apache-2.0
#include "dmesr/evaluation.hpp"

#include <cmath>
#include <numeric>

#include "dmesr/error.hpp"
#include "dmesr/ops.hpp"

namespace dmesr {

std::size_t rank_positive(std::span<const double> scores, std::size_t positive_index, std::size_t expected_count) {
  if (scores.size() != expected_count) {
    throw Error("expected " + std::to_string(expected_count) + " candidate scores, got " +
                std::to_string(scores.size()));
  }
  if (positive_index >= scores.size()) throw Error("positive index outside the candidate list");
  const double positive = scores[positive_index];
  if (std::isnan(positive)) return scores.size();
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != positive_index && !(scores[i] < positive)) ++rank;
  }
  return rank;
}

double hr_at_k(std::size_t rank, std::size_t k) {
  if (rank == 0) throw Error("rank is 1-based");
  return rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(std::size_t rank, std::size_t k) {
  if (rank == 0) throw Error("rank is 1-based");
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

MetricSummary summarize(std::span<const RankOutcome> outcomes, std::size_t k) {
  MetricSummary s;
  s.count = outcomes.size();
  if (s.count == 0) return s;
  for (const auto& o : outcomes) {
    s.hr += hr_at_k(o.rank, k);
    s.ndcg += ndcg_at_k(o.rank, k);
  }
  s.hr /= static_cast<double>(s.count);
  s.ndcg /= static_cast<double>(s.count);
  return s;
}

std::string EvalReport::definitions() const {
  return "hr@" + std::to_string(k) + ";ndcg@" + std::to_string(k) +
         "=1/log2(rank+1);ties=pessimistic;candidates=" + std::to_string(kCandidateCount);
}

MetricSummary long_tail_report(std::span<const RankOutcome> outcomes, const LongTailPartition& partition,
                               std::size_t k) {
  std::vector<RankOutcome> tail;
  for (const auto& o : outcomes) {
    if (partition.is_tail(o.target)) tail.push_back(o);
  }
  return summarize(tail, k);
}

EvalReport evaluate(std::span<const EvalInstance> instances, const InstanceScorer& scorer, std::size_t k,
                    bool keep_scores) {
  EvalReport report;
  report.k = k;
  report.outcomes.reserve(instances.size());
  for (const auto& inst : instances) {
    RankOutcome o;
    o.user = inst.user;
    o.target = inst.target;
    auto scores = scorer(inst);
    if (scores.size() != inst.negatives.size() + 1) {
      throw Error("scorer returned " + std::to_string(scores.size()) + " scores for " +
                  std::to_string(inst.negatives.size() + 1) + " candidates");
    }
    o.rank = rank_positive(scores, 0);
    if (keep_scores) o.scores = std::move(scores);
    report.outcomes.push_back(std::move(o));
  }
  report.overall = summarize(report.outcomes, k);
  return report;
}

EvalReport evaluate(const DmesrModel& model, std::span<const EvalInstance> instances, std::size_t k,
                    bool keep_scores) {
  NoGradGuard no_grad;
  std::vector<ItemId> catalog(model.config().num_items);
  std::iota(catalog.begin(), catalog.end(), ItemId{0});
  const ItemViews all = model.item_views(catalog);
  const std::size_t max_len = model.config().backbone.max_len;

  auto rows = [](const Var& table, std::span<const ItemId> items) {
    if (!table.defined()) return Var();
    const std::vector<std::size_t> idx(items.begin(), items.end());
    return gather_rows(table, idx);
  };

  auto scorer = [&](const EvalInstance& inst) {
    if (inst.prefix.empty()) throw Error("user " + std::to_string(inst.user) + " has an empty evaluation prefix");
    std::span<const ItemId> prefix(inst.prefix);
    if (max_len > 0 && prefix.size() > max_len) prefix = prefix.subspan(prefix.size() - max_len);
    const SequenceStates states = model.encode({rows(all.coarse, prefix), rows(all.fine, prefix)}, nullptr);
    const std::size_t last = prefix.size() - 1;
    const Var user_coarse = slice_rows(states.coarse, last, 1);
    const Var user_fine = states.fine.defined() ? slice_rows(states.fine, last, 1) : Var();

    std::vector<ItemId> candidates{inst.target};
    candidates.insert(candidates.end(), inst.negatives.begin(), inst.negatives.end());
    const Var s =
        score_candidates(rows(all.coarse, candidates), rows(all.fine, candidates), user_coarse, user_fine);
    const auto values = s.value().data();
    return std::vector<double>(values.begin(), values.end());
  };
  return evaluate(instances, scorer, k, keep_scores);
}

}  // namespace dmesr
