// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "dmesr/autograd.hpp"

namespace dmesr {

/// Query, key and value projections of one single-head attention pass.
struct AttentionProjections {
  AttentionProjections(const std::string& scope, std::size_t width, std::mt19937_64& rng);
  AttentionProjections(const AttentionProjections&) = delete;
  AttentionProjections& operator=(const AttentionProjections&) = delete;

  ParameterList parameters() { return {&query, &key, &value}; }
  std::size_t width() const { return query.value().rows(); }

  Parameter query;  // [d x d]
  Parameter key;
  Parameter value;
};

struct FusionOptions {
  // Position i only sees positions <= i.
  bool causal = false;
  // Adds the key/value source back onto the attention output.
  bool residual = false;
};

/// softmax((Q_src Wq)(KV_src Wk)^T / sqrt(d)) (KV_src Wv). `valid` marks real
/// positions (empty means all). Invalid keys get zero weight and invalid
/// query rows come out as zeros.
Var cross_attend(const Var& query_source, const Var& kv_source, const AttentionProjections& projections,
                 const std::vector<bool>& valid = {}, const FusionOptions& options = {});

struct FusedSequence {
  Var coarse;
  Var fine;
};

/// The coarse view is refined with fine-view queries and the fine view with
/// coarse-view queries, each direction with its own projections.
FusedSequence fuse_bidirectional(const Var& coarse, const Var& fine, const AttentionProjections& coarse_direction,
                                 const AttentionProjections& fine_direction, const std::vector<bool>& valid = {},
                                 const FusionOptions& options = {});

}  // namespace dmesr
