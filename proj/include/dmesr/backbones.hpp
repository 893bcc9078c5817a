// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dmesr/autograd.hpp"

namespace dmesr {

enum class BackboneKind { self_attention, recurrent };

std::string_view backbone_name(BackboneKind kind);
BackboneKind parse_backbone(std::string_view name);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::self_attention;
  std::size_t layers = 2;
  std::size_t heads = 1;
  std::size_t max_len = 200;
  double dropout = 0.2;
  std::size_t width = 128;
};

struct EncodedSequence {
  Var hidden;  // [L x d], zero rows at invalid positions
  Var user;    // [1 x d], hidden state at the last valid position
};

/// Sequence encoder over externally supplied item embeddings. Every output
/// row depends only on that position and earlier ones.
class Backbone {
 public:
  virtual ~Backbone() = default;
  /// `valid` marks real positions (empty means all). Dropout is active only
  /// when `dropout_rng` is given.
  virtual Var forward(const Var& sequence, const std::vector<bool>& valid, std::mt19937_64* dropout_rng) const = 0;
  virtual ParameterList parameters() = 0;
  virtual BackboneKind kind() const = 0;

  EncodedSequence encode(const Var& sequence, const std::vector<bool>& valid = {},
                         std::mt19937_64* dropout_rng = nullptr) const;
};

class SelfAttentionBackbone final : public Backbone {
 public:
  SelfAttentionBackbone(const std::string& scope, const BackboneConfig& config, std::mt19937_64& rng);
  Var forward(const Var& sequence, const std::vector<bool>& valid, std::mt19937_64* dropout_rng) const override;
  ParameterList parameters() override;
  BackboneKind kind() const override { return BackboneKind::self_attention; }

  struct Block {
    Block(const std::string& scope, std::size_t width, std::mt19937_64& rng);
    Parameter query, key, value;
    Parameter attn_norm_gain, attn_norm_bias;
    Parameter ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;
    Parameter ffn_norm_gain, ffn_norm_bias;
  };

  Parameter positions;  // [max_len x d]
  std::vector<std::unique_ptr<Block>> blocks;

 private:
  BackboneConfig config_;
};

/// Gated recurrent unit, reset gate applied before the recurrent product,
/// zero initial state.
class RecurrentBackbone final : public Backbone {
 public:
  RecurrentBackbone(const std::string& scope, const BackboneConfig& config, std::mt19937_64& rng);
  Var forward(const Var& sequence, const std::vector<bool>& valid, std::mt19937_64* dropout_rng) const override;
  ParameterList parameters() override;
  BackboneKind kind() const override { return BackboneKind::recurrent; }

  struct Cell {
    Cell(const std::string& scope, std::size_t width, std::mt19937_64& rng);
    Parameter input_update, input_reset, input_candidate;
    Parameter state_update, state_reset, state_candidate;
    Parameter bias_update, bias_reset, bias_candidate;
  };

  std::vector<std::unique_ptr<Cell>> cells;

 private:
  BackboneConfig config_;
};

std::unique_ptr<Backbone> make_backbone(const std::string& scope, const BackboneConfig& config,
                                        std::mt19937_64& rng);

}  // namespace dmesr
