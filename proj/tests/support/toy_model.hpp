// SPDX-License-Identifier: Apache-2.0
// Small random models and semantic tables for model and training tests.
#pragma once

#include <memory>
#include <random>

#include "dmesr/model.hpp"

namespace dmesr::testing {

inline std::shared_ptr<const SemanticTable> random_semantics(std::size_t items, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SemanticTable table;
  for (auto& t : table.routes) {
    t = Tensor::zeros(items, dim);
    for (auto& v : t.data()) v = normal(rng);
  }
  return std::make_shared<const SemanticTable>(std::move(table));
}

inline ModelConfig toy_config(std::size_t items, std::size_t input_dim, std::size_t width, BackboneKind kind) {
  ModelConfig c;
  c.input_dim = input_dim;
  c.width = width;
  c.num_items = items;
  c.backbone.kind = kind;
  c.backbone.layers = kind == BackboneKind::recurrent ? 1 : 2;
  c.backbone.max_len = 16;
  c.backbone.dropout = 0.0;
  c.seed = 5;
  return c;
}

/// Replaces every parameter with uniform noise so no entry sits at an
/// initial zero or one.
inline void randomize(const ParameterList& params, std::uint64_t seed, double spread = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  for (Parameter* p : params)
    for (auto& v : p->mutable_value().data()) v = u(rng);
}

}  // namespace dmesr::testing
