// SPDX-License-Identifier: Apache-2.0
#include "dmesr/autograd.hpp"

#include <unordered_set>

#include "dmesr/error.hpp"

namespace dmesr {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad = Tensor(value.shape());
  node_->value = std::move(value);
}

const Tensor& Var::grad() const {
  if (node_->grad.empty()) node_->grad = Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (node_->grad.empty()) {
    node_->grad = Tensor(node_->value.shape());
  } else {
    node_->grad.fill(0.0);
  }
}

Var Var::from_op(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ShapeError("backward() needs a one-element loss, got " +
                     (loss.defined() ? loss.value().shape_string() : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  detail::Node* root = loss.node().get();
  if (root->grad.empty()) root->grad = Tensor(root->value.shape());
  root->grad[0] += 1.0;

  std::vector<Tensor*> grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    grads.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      auto& in = *node->inputs[i];
      if (!in.requires_grad) continue;
      if (in.grad.empty()) in.grad = Tensor(in.value.shape());
      grads[i] = &in.grad;
    }
    node->backward(node->value, node->grad, grads);
  }
}

Parameter::Parameter(std::string name, Tensor init)
    : first_moment(init.shape()),
      second_moment(init.shape()),
      name_(std::move(name)),
      var_(std::move(init), true) {}

Tensor& Parameter::mutable_grad() {
  (void)var_.grad();
  return var_.node()->grad;
}

}  // namespace dmesr
