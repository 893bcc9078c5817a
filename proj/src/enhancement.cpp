// SPDX-License-Identifier: Apache-2.0
#include "dmesr/enhancement.hpp"

#include <limits>
#include <unordered_set>

#include "dmesr/error.hpp"
#include "dmesr/init.hpp"
#include "dmesr/ops.hpp"

namespace dmesr {

namespace {
std::size_t checked_hidden(std::size_t input_dim) {
  if (input_dim < 2) throw Error("adapter input width must be at least 2");
  return input_dim / 2;
}
}  // namespace

Adapter::Adapter(const std::string& scope, std::size_t input_dim, std::size_t output_dim, std::mt19937_64& rng)
    : down(scope + ".down", xavier_uniform(checked_hidden(input_dim), input_dim, rng)),
      down_bias(scope + ".down_bias", Tensor::zeros(1, input_dim / 2)),
      up(scope + ".up", xavier_uniform(output_dim, input_dim / 2, rng)),
      up_bias(scope + ".up_bias", Tensor::zeros(1, output_dim)),
      input_dim_(input_dim),
      hidden_dim_(input_dim / 2),
      output_dim_(output_dim) {
  if (output_dim == 0) throw Error("adapter output width must be positive");
}

Var Adapter::forward(const Var& input) const {
  if (input.cols() != input_dim_) {
    throw ShapeError("adapter expects width " + std::to_string(input_dim_) + ", got " +
                     input.value().shape_string());
  }
  const Var hidden = add(matmul_nt(input, down.var()), down_bias.var());
  return add(matmul_nt(hidden, up.var()), up_bias.var());
}

ParameterList Adapter::parameters() { return {&down, &down_bias, &up, &up_bias}; }

Var alignment_loss_directed(const Var& anchor, const Var& other, double tau) {
  if (tau <= 0) throw Error("temperature must be positive");
  if (anchor.rows() != other.rows() || anchor.cols() != other.cols()) {
    throw ShapeError("alignment inputs differ: " + anchor.value().shape_string() + " vs " +
                     other.value().shape_string());
  }
  const std::size_t b = anchor.rows();
  if (b < 2) throw Error("alignment needs at least two items in the batch");
  const Var logits = scale(cosine_matrix(anchor, other), 1.0 / tau);
  Tensor off_diagonal = Tensor::zeros(b, b);
  for (std::size_t i = 0; i < b; ++i) off_diagonal.at(i, i) = -std::numeric_limits<double>::infinity();
  const Var negatives = logsumexp_rows(add(logits, constant(std::move(off_diagonal))));
  return scale(mean(sub(diagonal(logits), negatives)), -1.0);
}

Var total_alignment_loss(const Var& text, const Var& visual, const Var& hybrid, double tau) {
  const Var ti = add(alignment_loss_directed(text, visual, tau), alignment_loss_directed(visual, text, tau));
  const Var th = add(alignment_loss_directed(text, hybrid, tau), alignment_loss_directed(hybrid, text, tau));
  return add(ti, th);
}

AlignmentBatch build_alignment_batch(std::span<const std::vector<ItemId>> sequences, std::size_t cap) {
  if (sequences.empty()) throw Error("alignment batch needs at least one sequence");
  AlignmentBatch batch;
  std::unordered_set<ItemId> seen;
  for (const auto& seq : sequences) {
    for (ItemId item : seq) {
      if (batch.items.size() >= cap) break;
      if (seen.insert(item).second) batch.items.push_back(item);
    }
  }
  batch.skipped = batch.items.size() < 2;
  return batch;
}

}  // namespace dmesr
