#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "igan/common.hpp"
#include "igan/tensor.hpp"

namespace igan {

class Var;

// Given the node itself, the index of one parent and the incoming gradient,
// produce the gradient contribution for that parent. Crucially this returns a
// Var, i.e. backward passes emit ordinary graph nodes, so gradients can be
// differentiated again. That is what makes the gradient penalty trainable:
// its parameter gradient is a second derivative of the critic.
using VjpFn =
    std::function<Var(const Var& self, size_t parent, const Var& grad_out)>;

namespace detail {
inline std::atomic<uint64_t>& node_counter() {
  static std::atomic<uint64_t> c{0};
  return c;
}
}  // namespace detail

struct Node {
  Tensor value;
  std::vector<Var> parents;
  VjpFn vjp;  // empty for leaves
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; parents always precede children
};

// Lightweight handle to a shared graph node. Ops are eager: the value is
// computed immediately, the graph records only how to push gradients back.
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad = false) {
    Var v;
    v.n_ = std::make_shared<Node>();
    v.n_->value = std::move(value);
    v.n_->requires_grad = requires_grad;
    v.n_->seq = detail::node_counter().fetch_add(1);
    return v;
  }

  static Var op(Tensor value, std::vector<Var> parents, VjpFn vjp) {
    Var v;
    v.n_ = std::make_shared<Node>();
    v.n_->value = std::move(value);
    v.n_->parents = std::move(parents);
    v.n_->vjp = std::move(vjp);
    for (const Var& p : v.n_->parents)
      if (p.requires_grad()) v.n_->requires_grad = true;
    v.n_->seq = detail::node_counter().fetch_add(1);
    return v;
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor& val() const { return n_->value; }
  // In-place access to a leaf's storage; used by the optimizer between
  // iterations, never while a graph referencing the leaf is still alive.
  Tensor& mutable_val() { return n_->value; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const Shape& shape() const { return n_->value.shape(); }
  int64_t numel() const { return n_->value.numel(); }
  Node* node() const { return n_.get(); }

 private:
  std::shared_ptr<Node> n_;
};

// Gradient map keyed by node identity.
using GradMap = std::unordered_map<const Node*, Var>;

// Reverse-mode sweep from a scalar root towards the requested targets.
// Only nodes that (a) are reachable from the root and (b) can reach a target
// participate; gradients along pruned paths are never materialized. Returns
// a map holding gradients for every requested target that was reached (a
// target the root does not depend on is simply absent).
inline GradMap backward(const Var& root, const std::vector<Var>& targets) {
  check(root.defined(), ErrorKind::numeric, "backward: undefined root");
  check(root.numel() == 1, ErrorKind::numeric,
        "backward: root must be scalar, got ", shape_str(root.shape()));

  // Collect the reachable subgraph.
  std::vector<Var> order;
  std::unordered_set<const Node*> seen;
  std::vector<Var> stack{root};
  while (!stack.empty()) {
    Var v = stack.back();
    stack.pop_back();
    if (!v.requires_grad() || seen.count(v.node())) continue;
    seen.insert(v.node());
    order.push_back(v);
    for (const Var& p : v.node()->parents) stack.push_back(p);
  }
  // Creation order is a topological order (parents precede children).
  std::sort(order.begin(), order.end(),
            [](const Var& a, const Var& b) { return a.node()->seq < b.node()->seq; });

  // Mark nodes that can reach a target, walking in ascending order so each
  // node sees its parents' marks.
  std::unordered_set<const Node*> useful;
  for (const Var& t : targets)
    if (t.defined()) useful.insert(t.node());
  for (const Var& v : order) {
    if (useful.count(v.node())) continue;
    for (const Var& p : v.node()->parents)
      if (useful.count(p.node())) {
        useful.insert(v.node());
        break;
      }
  }

  GradMap grads;
  if (!useful.count(root.node())) return grads;  // root independent of targets
  grads[root.node()] = Var::leaf(Tensor::full(root.shape(), Real(1)));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Var& v = *it;
    auto g_it = grads.find(v.node());
    if (g_it == grads.end() || !v.node()->vjp) continue;
    const Var g = g_it->second;
    for (size_t i = 0; i < v.node()->parents.size(); ++i) {
      const Var& p = v.node()->parents[i];
      if (!p.requires_grad() || !useful.count(p.node())) continue;
      Var pg = v.node()->vjp(v, i, g);
      if (!pg.val().same_shape(p.val()))
        fail(ErrorKind::numeric, "backward: vjp produced shape ",
             shape_str(pg.shape()), " for parent of shape ",
             shape_str(p.shape()));
      auto existing = grads.find(p.node());
      if (existing == grads.end()) {
        grads[p.node()] = pg;
      } else {
        // Fan-out accumulation. Emitted as a graph op so higher derivatives
        // flow through accumulation points too.
        Tensor sum = existing->second.val();
        for (int64_t k = 0; k < sum.numel(); ++k) sum.at(k) += pg.val().at(k);
        Var a = existing->second, b = pg;
        existing->second = Var::op(
            std::move(sum), {a, b},
            [](const Var&, size_t, const Var& go) { return go; });
      }
    }
  }

  // Drop everything except the requested targets.
  GradMap out;
  for (const Var& t : targets) {
    if (!t.defined()) continue;
    auto it = grads.find(t.node());
    if (it != grads.end()) out[t.node()] = it->second;
  }
  return out;
}

// Convenience: gradient for one target, or an undefined Var if unreached.
inline Var grad_of(const GradMap& grads, const Var& target) {
  auto it = grads.find(target.node());
  return it == grads.end() ? Var() : it->second;
}

}  // namespace igan
