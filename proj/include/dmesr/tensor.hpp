// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dmesr {

/// Dense row-major tensor of 64-bit floats.
///
/// Arbitrary rank is allowed for storage (checkpoints carry the full shape),
/// but the differentiable operators work on rank-1 and rank-2 tensors. A
/// rank-1 tensor of extent n is viewed as a 1 x n row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor row_vector(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  /// The single value of a one-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  void fill(double v);
  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Cosine similarity a.b / (|a||b| + 1e-12); two near-zero vectors give 0.
double cosine_sim(std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Row-wise softmax with max subtraction. -inf entries receive zero weight
/// and a row that is entirely -inf yields all zeros.
Tensor softmax_rows(const Tensor& m);

/// Plain triple-loop product, used as a value kernel by the autodiff layer.
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace dmesr
