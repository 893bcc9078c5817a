// SPDX-License-Identifier: Apache-2.0
// Full-batch optimisation of the alignment loss alone on a toy batch, with
// cosine statistics recorded before and after. Shared by the unit and
// acceptance suites.
#pragma once

#include <random>

#include "dmesr/enhancement.hpp"
#include "dmesr/ops.hpp"
#include "dmesr/optim.hpp"

namespace dmesr::testing {

struct PairCosines {
  double positive = 0.0;  // mean cos(a_i, b_i)
  double negative = 0.0;  // mean cos(a_i, b_k), k != i
};

inline PairCosines pair_cosines(const Tensor& a, const Tensor& b) {
  PairCosines out;
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double c = cosine_sim(a.row(i), b.row(k));
      (i == k ? out.positive : out.negative) += c;
    }
  }
  out.positive /= static_cast<double>(n);
  out.negative /= static_cast<double>(n * (n - 1));
  return out;
}

struct DescentOutcome {
  PairCosines text_visual_before, text_visual_after;
  PairCosines text_hybrid_before, text_hybrid_after;
  double loss_before = 0.0, loss_after = 0.0;
};

/// Three route adapters (input 8 -> 4) over fixed random inputs for a batch
/// of `batch` items, trained for `steps` Adam steps on the alignment loss.
inline DescentOutcome run_alignment_descent(std::size_t batch = 8, std::size_t width = 4, std::size_t steps = 50,
                                            std::uint64_t seed = 2024, double tau = 2.0, double lr = 0.01) {
  std::mt19937_64 rng(seed);
  const std::size_t input = 2 * width;
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_inputs = [&] {
    Tensor t = Tensor::zeros(batch, input);
    for (double& x : t.data()) x = normal(rng);
    return constant(std::move(t));
  };
  const Var text_in = random_inputs(), visual_in = random_inputs(), hybrid_in = random_inputs();
  Adapter text("text", input, width, rng), visual("visual", input, width, rng), hybrid("hybrid", input, width, rng);
  ParameterList params;
  for (Adapter* a : {&text, &visual, &hybrid})
    for (Parameter* p : a->parameters()) params.push_back(p);

  auto forward = [&](DescentOutcome& out, bool before) {
    NoGradGuard guard;
    const Var t = text.forward(text_in), v = visual.forward(visual_in), h = hybrid.forward(hybrid_in);
    const double loss = total_alignment_loss(t, v, h, tau).item();
    (before ? out.text_visual_before : out.text_visual_after) = pair_cosines(t.value(), v.value());
    (before ? out.text_hybrid_before : out.text_hybrid_after) = pair_cosines(t.value(), h.value());
    (before ? out.loss_before : out.loss_after) = loss;
  };

  DescentOutcome out;
  forward(out, true);
  AdamConfig adam;
  adam.lr = lr;
  for (std::size_t s = 0; s < steps; ++s) {
    const Var loss = total_alignment_loss(text.forward(text_in), visual.forward(visual_in), hybrid.forward(hybrid_in), tau);
    backward(loss);
    adam_step(params, adam);
  }
  forward(out, false);
  return out;
}

}  // namespace dmesr::testing
