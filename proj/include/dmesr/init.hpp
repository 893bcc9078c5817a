// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>

#include "dmesr/tensor.hpp"

namespace dmesr {

/// Uniform in +-sqrt(6 / (rows + cols)).
inline Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

inline Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

}  // namespace dmesr
