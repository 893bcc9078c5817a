// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmesr/autograd.hpp"

namespace dmesr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over every parameter, then clears the
/// gradients.
void adam_step(const ParameterList& params, const AdamConfig& config);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

void zero_grad(const ParameterList& params);

}  // namespace dmesr
