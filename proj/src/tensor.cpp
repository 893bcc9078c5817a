// SPDX-License-Identifier: Apache-2.0
#include "dmesr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "dmesr/error.hpp"

namespace dmesr {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_extents(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
}

constexpr double kCosineEps = 1e-12;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (data_.size() != product(shape_)) {
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                     dmesr::shape_string(shape_));
  }
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return shape_[0];
  throw ShapeError("rows() needs a rank-1 or rank-2 tensor, got " + dmesr::shape_string(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw ShapeError("cols() needs a rank-1 or rank-2 tensor, got " + dmesr::shape_string(shape_));
}

std::span<double> Tensor::row(std::size_t r) {
  const auto c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + dmesr::shape_string(shape_));
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const { return dmesr::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot of lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / (norm(a) * norm(b) + kCosineEps);
}

Tensor softmax_rows(const Tensor& m) {
  Tensor out({m.rows(), m.cols()});
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    if (mx == kNegInf) continue;  // fully masked row stays zero
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = in[c] == kNegInf ? 0.0 : std::exp(in[c] - mx);
      total += o[c];
    }
    for (auto& v : o) v /= total;
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner extents disagree: " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      const double* brow = &b.data()[p * n];
      double* orow = &out.data()[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

}  // namespace dmesr
