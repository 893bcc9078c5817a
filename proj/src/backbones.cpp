// SPDX-License-Identifier: Apache-2.0
#include "dmesr/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmesr/error.hpp"
#include "dmesr/init.hpp"
#include "dmesr/ops.hpp"

namespace dmesr {

namespace {

void check_input(const Var& sequence, const std::vector<bool>& valid, std::size_t width, std::size_t max_len) {
  if (sequence.cols() != width) {
    throw ShapeError("backbone expects width " + std::to_string(width) + ", got " + sequence.value().shape_string());
  }
  if (sequence.rows() > max_len) {
    throw Error("sequence length " + std::to_string(sequence.rows()) + " exceeds max_len " + std::to_string(max_len));
  }
  if (!valid.empty() && valid.size() != sequence.rows()) throw ShapeError("mask length differs from sequence");
}

bool has_padding(const std::vector<bool>& valid) {
  return std::find(valid.begin(), valid.end(), false) != valid.end();
}

Var keep_column(const std::vector<bool>& valid) {
  Tensor keep = Tensor::zeros(valid.size(), 1);
  for (std::size_t i = 0; i < valid.size(); ++i) keep.at(i, 0) = valid[i] ? 1.0 : 0.0;
  return constant(std::move(keep));
}

Var maybe_dropout(const Var& x, double rate, std::mt19937_64* rng) { return rng ? dropout(x, rate, *rng) : x; }

}  // namespace

std::string_view backbone_name(BackboneKind kind) {
  return kind == BackboneKind::self_attention ? "self_attention" : "recurrent";
}

BackboneKind parse_backbone(std::string_view name) {
  if (name == "self_attention" || name == "sasrec") return BackboneKind::self_attention;
  if (name == "recurrent" || name == "gru4rec") return BackboneKind::recurrent;
  throw Error("unknown backbone '" + std::string(name) + "' (expected self_attention or recurrent)");
}

EncodedSequence Backbone::encode(const Var& sequence, const std::vector<bool>& valid,
                                 std::mt19937_64* dropout_rng) const {
  EncodedSequence out;
  out.hidden = forward(sequence, valid, dropout_rng);
  std::size_t last = sequence.rows();
  if (valid.empty()) {
    last -= 1;
  } else {
    while (last > 0 && !valid[last - 1]) --last;
    if (last == 0) throw Error("cannot encode a sequence with no valid position");
    last -= 1;
  }
  out.user = slice_rows(out.hidden, last, 1);
  return out;
}

SelfAttentionBackbone::Block::Block(const std::string& scope, std::size_t d, std::mt19937_64& rng)
    : query(scope + ".query", xavier_uniform(d, d, rng)),
      key(scope + ".key", xavier_uniform(d, d, rng)),
      value(scope + ".value", xavier_uniform(d, d, rng)),
      attn_norm_gain(scope + ".attn_norm_gain", Tensor({1, d}, 1.0)),
      attn_norm_bias(scope + ".attn_norm_bias", Tensor::zeros(1, d)),
      ffn_in(scope + ".ffn_in", xavier_uniform(d, d, rng)),
      ffn_in_bias(scope + ".ffn_in_bias", Tensor::zeros(1, d)),
      ffn_out(scope + ".ffn_out", xavier_uniform(d, d, rng)),
      ffn_out_bias(scope + ".ffn_out_bias", Tensor::zeros(1, d)),
      ffn_norm_gain(scope + ".ffn_norm_gain", Tensor({1, d}, 1.0)),
      ffn_norm_bias(scope + ".ffn_norm_bias", Tensor::zeros(1, d)) {}

SelfAttentionBackbone::SelfAttentionBackbone(const std::string& scope, const BackboneConfig& config,
                                             std::mt19937_64& rng)
    : positions(scope + ".positions", normal_init(config.max_len, config.width, 0.02, rng)), config_(config) {
  if (config.width == 0 || config.heads == 0 || config.width % config.heads != 0) {
    throw Error("width " + std::to_string(config.width) + " is not divisible by " + std::to_string(config.heads) +
                " heads");
  }
  if (config.max_len == 0) throw Error("max_len must be positive");
  for (std::size_t l = 0; l < config.layers; ++l) {
    blocks.push_back(std::make_unique<Block>(scope + ".block" + std::to_string(l), config.width, rng));
  }
}

ParameterList SelfAttentionBackbone::parameters() {
  ParameterList out{&positions};
  for (auto& b : blocks) {
    for (Parameter* p : {&b->query, &b->key, &b->value, &b->attn_norm_gain, &b->attn_norm_bias, &b->ffn_in,
                         &b->ffn_in_bias, &b->ffn_out, &b->ffn_out_bias, &b->ffn_norm_gain, &b->ffn_norm_bias}) {
      out.push_back(p);
    }
  }
  return out;
}

Var SelfAttentionBackbone::forward(const Var& sequence, const std::vector<bool>& valid,
                                   std::mt19937_64* rng) const {
  check_input(sequence, valid, config_.width, config_.max_len);
  const std::size_t len = sequence.rows();
  const std::size_t head_width = config_.width / config_.heads;
  const bool padded = has_padding(valid);
  const Var keep = padded ? keep_column(valid) : Var();

  Tensor bias = Tensor::zeros(len, len);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      if (j > i || (padded && !valid[j])) bias.at(i, j) = -std::numeric_limits<double>::infinity();
    }
  }
  const Var attention_bias = constant(std::move(bias));

  Var x = add(sequence, slice_rows(positions.var(), 0, len));
  x = maybe_dropout(x, config_.dropout, rng);
  if (padded) x = mul(x, keep);

  for (const auto& b : blocks) {
    const Var q = matmul(x, b->query.var());
    const Var k = matmul(x, b->key.var());
    const Var v = matmul(x, b->value.var());
    Var attended;
    for (std::size_t h = 0; h < config_.heads; ++h) {
      const std::size_t c0 = h * head_width;
      const Var logits = scale(matmul_nt(slice_cols(q, c0, head_width), slice_cols(k, c0, head_width)),
                               1.0 / std::sqrt(static_cast<double>(head_width)));
      const Var head = matmul(softmax_rows(add(logits, attention_bias)), slice_cols(v, c0, head_width));
      attended = h == 0 ? head : concat_cols(attended, head);
    }
    attended = maybe_dropout(attended, config_.dropout, rng);
    x = layer_norm_rows(add(x, attended), b->attn_norm_gain.var(), b->attn_norm_bias.var());

    Var ffn = relu(add(matmul(x, b->ffn_in.var()), b->ffn_in_bias.var()));
    ffn = add(matmul(ffn, b->ffn_out.var()), b->ffn_out_bias.var());
    ffn = maybe_dropout(ffn, config_.dropout, rng);
    x = layer_norm_rows(add(x, ffn), b->ffn_norm_gain.var(), b->ffn_norm_bias.var());
    if (padded) x = mul(x, keep);
  }
  return x;
}

RecurrentBackbone::Cell::Cell(const std::string& scope, std::size_t d, std::mt19937_64& rng)
    : input_update(scope + ".input_update", xavier_uniform(d, d, rng)),
      input_reset(scope + ".input_reset", xavier_uniform(d, d, rng)),
      input_candidate(scope + ".input_candidate", xavier_uniform(d, d, rng)),
      state_update(scope + ".state_update", xavier_uniform(d, d, rng)),
      state_reset(scope + ".state_reset", xavier_uniform(d, d, rng)),
      state_candidate(scope + ".state_candidate", xavier_uniform(d, d, rng)),
      bias_update(scope + ".bias_update", Tensor::zeros(1, d)),
      bias_reset(scope + ".bias_reset", Tensor::zeros(1, d)),
      bias_candidate(scope + ".bias_candidate", Tensor::zeros(1, d)) {}

RecurrentBackbone::RecurrentBackbone(const std::string& scope, const BackboneConfig& config, std::mt19937_64& rng)
    : config_(config) {
  if (config.width == 0) throw Error("width must be positive");
  if (config.layers == 0) throw Error("recurrent backbone needs at least one layer");
  for (std::size_t l = 0; l < config.layers; ++l) {
    cells.push_back(std::make_unique<Cell>(scope + ".cell" + std::to_string(l), config.width, rng));
  }
}

ParameterList RecurrentBackbone::parameters() {
  ParameterList out;
  for (auto& c : cells) {
    for (Parameter* p : {&c->input_update, &c->input_reset, &c->input_candidate, &c->state_update, &c->state_reset,
                         &c->state_candidate, &c->bias_update, &c->bias_reset, &c->bias_candidate}) {
      out.push_back(p);
    }
  }
  return out;
}

Var RecurrentBackbone::forward(const Var& sequence, const std::vector<bool>& valid, std::mt19937_64* rng) const {
  check_input(sequence, valid, config_.width, config_.max_len);
  const std::size_t len = sequence.rows();
  Var x = maybe_dropout(sequence, config_.dropout, rng);
  for (const auto& c : cells) {
    const Var xu = add(matmul(x, c->input_update.var()), c->bias_update.var());
    const Var xr = add(matmul(x, c->input_reset.var()), c->bias_reset.var());
    const Var xn = add(matmul(x, c->input_candidate.var()), c->bias_candidate.var());
    Var state = constant(Tensor::zeros(1, config_.width));
    const Var zero_row = state;
    std::vector<Var> outputs;
    outputs.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      if (!valid.empty() && !valid[t]) {
        outputs.push_back(zero_row);
        continue;
      }
      const Var update = sigmoid(add(slice_rows(xu, t, 1), matmul(state, c->state_update.var())));
      const Var reset = sigmoid(add(slice_rows(xr, t, 1), matmul(state, c->state_reset.var())));
      const Var candidate = tanh(add(slice_rows(xn, t, 1), matmul(mul(reset, state), c->state_candidate.var())));
      state = add(candidate, mul(update, sub(state, candidate)));
      outputs.push_back(state);
    }
    x = stack_rows(outputs);
  }
  return x;
}

std::unique_ptr<Backbone> make_backbone(const std::string& scope, const BackboneConfig& config,
                                        std::mt19937_64& rng) {
  if (config.kind == BackboneKind::self_attention) return std::make_unique<SelfAttentionBackbone>(scope, config, rng);
  return std::make_unique<RecurrentBackbone>(scope, config, rng);
}

}  // namespace dmesr
