// SPDX-License-Identifier: Apache-2.0
#include "dmesr/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmesr/error.hpp"
#include "dmesr/init.hpp"
#include "dmesr/ops.hpp"

namespace dmesr {

AttentionProjections::AttentionProjections(const std::string& scope, std::size_t width, std::mt19937_64& rng)
    : query(scope + ".query", xavier_uniform(width, width, rng)),
      key(scope + ".key", xavier_uniform(width, width, rng)),
      value(scope + ".value", xavier_uniform(width, width, rng)) {}

Var cross_attend(const Var& query_source, const Var& kv_source, const AttentionProjections& projections,
                 const std::vector<bool>& valid, const FusionOptions& options) {
  const std::size_t len = query_source.rows(), d = query_source.cols();
  if (kv_source.rows() != len || kv_source.cols() != d) {
    throw ShapeError("cross_attend sources differ: " + query_source.value().shape_string() + " vs " +
                     kv_source.value().shape_string());
  }
  if (projections.width() != d) throw ShapeError("cross_attend projections do not match width " + std::to_string(d));
  if (!valid.empty() && valid.size() != len) throw ShapeError("cross_attend mask length differs from sequence");
  const bool any_valid = valid.empty() || std::find(valid.begin(), valid.end(), true) != valid.end();
  if (!any_valid) throw Error("cross_attend with every position masked");

  const Var q = matmul(query_source, projections.query.var());
  const Var k = matmul(kv_source, projections.key.var());
  const Var v = matmul(kv_source, projections.value.var());
  Var logits = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));

  const double neg_inf = -std::numeric_limits<double>::infinity();
  const bool masked = !valid.empty() && std::find(valid.begin(), valid.end(), false) != valid.end();
  if (masked || options.causal) {
    Tensor bias = Tensor::zeros(len, len);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        if ((masked && !valid[j]) || (options.causal && j > i)) bias.at(i, j) = neg_inf;
      }
    }
    logits = add(logits, constant(std::move(bias)));
  }
  Var out = matmul(softmax_rows(logits), v);
  if (options.residual) out = add(out, kv_source);
  if (masked) {
    Tensor keep = Tensor::zeros(len, 1);
    for (std::size_t i = 0; i < len; ++i) keep.at(i, 0) = valid[i] ? 1.0 : 0.0;
    out = mul(out, constant(std::move(keep)));
  }
  return out;
}

FusedSequence fuse_bidirectional(const Var& coarse, const Var& fine, const AttentionProjections& coarse_direction,
                                 const AttentionProjections& fine_direction, const std::vector<bool>& valid,
                                 const FusionOptions& options) {
  if (coarse.rows() != fine.rows() || coarse.cols() != fine.cols()) {
    throw ShapeError("views differ: " + coarse.value().shape_string() + " vs " + fine.value().shape_string());
  }
  return {cross_attend(fine, coarse, coarse_direction, valid, options),
          cross_attend(coarse, fine, fine_direction, valid, options)};
}

}  // namespace dmesr
