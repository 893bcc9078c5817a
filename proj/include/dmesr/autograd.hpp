// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmesr/tensor.hpp"

namespace dmesr {

/// Propagates the output gradient into the gradients of the op's inputs.
/// Entries of `input_grads` are null for inputs that do not need gradients.
using BackwardFn =
    std::function<void(const Tensor& out, const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation, except for leaves
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};
}  // namespace detail

/// Handle onto a node of the reverse-mode tape. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  /// Accumulated gradient; zeros if nothing has flowed back yet.
  const Tensor& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const { return node_->value.item(); }

  void zero_grad();

  /// Record an op result. Inputs are kept alive by the returned node.
  static Var from_op(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline Var constant(Tensor value) { return Var(std::move(value), false); }

/// Reverse sweep from a one-element loss; gradients accumulate into leaves.
void backward(const Var& loss);

/// Whether new ops record backward closures on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Trainable tensor with its gradient and Adam moment estimates.
class Parameter {
 public:
  Parameter(std::string name, Tensor init);

  const std::string& name() const { return name_; }
  const Var& var() const { return var_; }
  const Tensor& value() const { return var_.value(); }
  Tensor& mutable_value() { return var_.mutable_value(); }
  const Tensor& grad() const { return var_.grad(); }
  Tensor& mutable_grad();
  void zero_grad() { var_.zero_grad(); }

  Tensor first_moment;
  Tensor second_moment;
  std::int64_t step = 0;

 private:
  std::string name_;
  Var var_;
};

using ParameterList = std::vector<Parameter*>;

}  // namespace dmesr
