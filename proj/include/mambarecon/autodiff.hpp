#pragma once

// Define-by-run reverse-mode differentiation. Every primitive returns a Var
// whose Node remembers its parents and a backward rule; backward() walks the
// graph in reverse topological order and accumulates gradients additively.

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mambarecon/errors.hpp"
#include "mambarecon/tensor.hpp"

namespace mambarecon {

struct Node;

/// Backward rule: given the node and the gradient of the loss w.r.t. its value,
/// add contributions into parent gradients. A null slot means that parent
/// does not require a gradient.
using BackwardFn = std::function<void(const Node& self, const Tensor& grad, std::span<Tensor* const> parent_grads)>;

struct Node {
  Tensor value;
  std::vector<std::shared_ptr<Node>> parents;
  std::string_view op = "leaf";
  BackwardFn backward;
  bool requires_grad = false;
  /// Scratch tensors a primitive keeps from its forward pass (e.g. scan states).
  std::vector<Tensor> saved;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::string_view op() const { return node_->op; }

  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  /// Replace the value of a leaf in place (optimizer updates, finite-difference probes).
  Tensor& mutable_value() { return node_->value; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that is not differentiated.
inline Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

/// Differentiable leaf (a trainable parameter or an input under inspection).
inline Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording on this thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Build the result node of a primitive. Parents that do not require a gradient
/// are still recorded so the rule can read their values.
inline Var make_result(Tensor value, std::vector<Var> parents, std::string_view op, BackwardFn backward,
                       std::vector<Tensor> saved = {}) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (detail::grad_mode())
    for (const auto& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
    node->saved = std::move(saved);
  }
  return Var(std::move(node));
}

/// Gradients of a scalar loss w.r.t. every differentiable leaf reachable from it.
class Gradients {
 public:
  const Tensor* find(const Var& v) const {
    auto it = grads_.find(v.node());
    return it == grads_.end() ? nullptr : &it->second;
  }

  /// Gradient of `v`, or zeros of its shape if the loss does not depend on it.
  Tensor get(const Var& v) const {
    if (const Tensor* g = find(v)) return *g;
    return Tensor(v.shape());
  }

  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Var& loss);
  std::unordered_map<const Node*, Tensor> grads_;
};

/// Reverse-mode sweep from a scalar loss.
inline Gradients backward(const Var& loss) {
  if (!loss) throw ContractError("backward: empty loss");
  if (loss.size() != 1) throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));

  // Post-order DFS; parents are visited in creation order so the resulting
  // schedule (and the order of fan-out accumulation) is deterministic.
  std::vector<const Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack;
  if (loss.requires_grad()) stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, Tensor> grads;
  if (loss.requires_grad()) grads.emplace(loss.node(), Tensor(loss.shape(), 1.0));

  std::vector<Tensor*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (!node->backward) continue;  // leaf
    auto g = grads.find(node);
    if (g == grads.end()) continue;
    // References into an unordered_map survive rehashing; iterators do not.
    Tensor& grad = g->second;
    slots.assign(node->parents.size(), nullptr);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Node* parent = node->parents[i].get();
      if (!parent->requires_grad) continue;
      auto [pit, inserted] = grads.try_emplace(parent);
      if (inserted) pit->second = Tensor(parent->value.shape());
      slots[i] = &pit->second;
    }
    node->backward(*node, grad, slots);
    // Interior gradients are dead once propagated.
    grad = Tensor();
  }

  Gradients out;
  for (auto& [node, grad] : grads)
    if (!node->backward && node->requires_grad) out.grads_.emplace(node, std::move(grad));
  return out;
}

}  // namespace mambarecon
