// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmesr/dataset.hpp"
#include "dmesr/model.hpp"

namespace dmesr {

inline constexpr std::size_t kCandidateCount = 101;

/// 1 + number of other candidates scoring at least as high as the positive.
std::size_t rank_positive(std::span<const double> scores, std::size_t positive_index,
                          std::size_t expected_count = kCandidateCount);

double hr_at_k(std::size_t rank, std::size_t k);
double ndcg_at_k(std::size_t rank, std::size_t k);

struct RankOutcome {
  UserId user = 0;
  ItemId target = 0;
  std::size_t rank = 0;
  std::vector<double> scores;  // target first, then negatives; optional
};

struct MetricSummary {
  std::size_t count = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  bool defined() const { return count > 0; }
};

MetricSummary summarize(std::span<const RankOutcome> outcomes, std::size_t k);

struct EvalReport {
  std::size_t k = 10;
  MetricSummary overall;
  std::optional<MetricSummary> tail;
  std::vector<RankOutcome> outcomes;

  /// Identifies the metric conventions used to produce the numbers.
  std::string definitions() const;
};

/// Metrics restricted to outcomes whose target is a tail item.
MetricSummary long_tail_report(std::span<const RankOutcome> outcomes, const LongTailPartition& partition,
                               std::size_t k);

/// Scores (target, negatives...) for one instance.
using InstanceScorer = std::function<std::vector<double>(const EvalInstance&)>;

EvalReport evaluate(std::span<const EvalInstance> instances, const InstanceScorer& scorer, std::size_t k = 10,
                    bool keep_scores = false);

/// Model scores for every candidate of every instance; the prefix is
/// left-truncated to the backbone's maximum length.
EvalReport evaluate(const DmesrModel& model, std::span<const EvalInstance> instances, std::size_t k = 10,
                    bool keep_scores = false);

}  // namespace dmesr
