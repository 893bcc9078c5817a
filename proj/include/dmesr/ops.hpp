// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "dmesr/autograd.hpp"

// Differentiable operators over rank-1/rank-2 tensors. Every result is a
// matrix (rank 2); scalars are 1x1.
namespace dmesr {

Var matmul(const Var& a, const Var& b);
/// a * b^T without materialising the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

// Element-wise binary ops. `b` may match `a`, be a 1xn row, an mx1 column,
// or a 1x1 scalar; it is broadcast against `a`.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double c);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// log(clamp(a, lo, hi)); the gradient is zero where the clamp is active.
Var log_clamped(const Var& a, double lo, double hi);

/// Row softmax; see the Tensor overload for the -inf conventions.
Var softmax_rows(const Var& a);
/// Row-wise log-sum-exp, m x n -> m x 1.
Var logsumexp_rows(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sum across columns, m x n -> m x 1.
Var row_sums(const Var& a);

Var concat_cols(const Var& a, const Var& b);
Var stack_rows(const std::vector<Var>& rows);
Var gather_rows(const Var& a, std::span<const std::size_t> indices);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
/// Main diagonal of a square matrix as an n x 1 column.
Var diagonal(const Var& a);

/// Per-row normalisation with learned gain and bias (both 1 x n).
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-8);

/// Inverted dropout; identity when rate is 0.
Var dropout(const Var& a, double rate, std::mt19937_64& rng);

/// S[i,k] = cosine_sim(a_i, b_k) for the rows of a (m x d) and b (n x d).
Var cosine_matrix(const Var& a, const Var& b);

}  // namespace dmesr
