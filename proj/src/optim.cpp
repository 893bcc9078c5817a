// SPDX-License-Identifier: Apache-2.0
#include "dmesr/optim.hpp"

#include <cmath>

namespace dmesr {

void adam_step(const ParameterList& params, const AdamConfig& config) {
  for (Parameter* p : params) {
    Tensor& value = p->mutable_value();
    Tensor& grad = p->mutable_grad();
    ++p->step;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(p->step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(p->step));
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      double& m = p->first_moment[i];
      double& v = p->second_moment[i];
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g * g;
      value[i] -= config.lr * (m / c1) / (std::sqrt(v / c2) + config.eps);
    }
    grad.fill(0.0);
  }
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (Parameter* p : params)
    for (double g : p->grad().data()) sq += g * g;
  const double total = std::sqrt(sq);
  if (total > max_norm && total > 0.0) {
    const double s = max_norm / total;
    for (Parameter* p : params)
      for (double& g : p->mutable_grad().data()) g *= s;
  }
  return total;
}

void zero_grad(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace dmesr
