// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmesr/autograd.hpp"
#include "dmesr/dataset.hpp"

namespace dmesr {

/// Two stacked affine maps, input width -> input/2 -> output width, with no
/// nonlinearity in between. Rows of the input are items.
class Adapter {
 public:
  Adapter(const std::string& scope, std::size_t input_dim, std::size_t output_dim, std::mt19937_64& rng);
  Adapter(const Adapter&) = delete;
  Adapter& operator=(const Adapter&) = delete;

  /// [n x input_dim] -> [n x output_dim]
  Var forward(const Var& input) const;
  ParameterList parameters();

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t output_dim() const { return output_dim_; }

  Parameter down;       // [hidden x input]
  Parameter down_bias;  // [1 x hidden]
  Parameter up;         // [output x hidden]
  Parameter up_bias;    // [1 x output]

 private:
  std::size_t input_dim_, hidden_dim_, output_dim_;
};

/// In-batch contrastive loss of `anchor` rows against `other` rows at
/// temperature `tau`. Row i of both matrices is the same item; every other
/// row of `other` is a negative, and the positive is left out of the
/// denominator.
Var alignment_loss_directed(const Var& anchor, const Var& other, double tau);

/// Both directions of text<->visual plus both directions of text<->hybrid.
Var total_alignment_loss(const Var& text, const Var& visual, const Var& hybrid, double tau);

struct AlignmentBatch {
  std::vector<ItemId> items;  // distinct, in first-occurrence order
  bool skipped = false;       // fewer than two distinct items
};

AlignmentBatch build_alignment_batch(std::span<const std::vector<ItemId>> sequences, std::size_t cap = 512);

}  // namespace dmesr
