#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "idm/tensor.hpp"

namespace idm::ad {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Learned weight. Gradients accumulate here after Tape::backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

  void zero_grad() { std::fill(grad.values.begin(), grad.values.end(), 0.0); }
};

class Tape;

// One recorded operation output. `backward` pushes this node's gradient
// into its parents' gradients (additively).
struct Value {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  Tape* tape = nullptr;
  std::vector<Value*> parents;
  std::function<void(Value&)> backward_fn;
  Parameter* param = nullptr;  // set for parameter leaves
};

// Records operations in topological (creation) order; backward replays the
// list in reverse and flushes leaf gradients into their Parameters.
// A tape and its values are confined to one thread.
class Tape {
 public:
  Value* leaf(Tensor v, bool requires_grad = false) {
    Value* n = alloc();
    n->val = std::move(v);
    n->requires_grad = requires_grad;
    return n;
  }

  Value* leaf(Parameter& p) {
    Value* n = alloc();
    n->val = p.value;
    n->requires_grad = true;
    n->param = &p;
    return n;
  }

  Value* record(Tensor out, std::vector<Value*> parents,
                std::function<void(Value&)> backward_fn) {
    Value* n = alloc();
    n->val = std::move(out);
    n->parents = std::move(parents);
    for (Value* p : n->parents)
      if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return n;
  }

  // Seeds root with d(root)/d(root)=1 and accumulates gradients back to
  // every leaf. Parameter leaves flush into Parameter::grad.
  void backward(Value* root) {
    if (root->val.size() != 1)
      throw DimensionError("backward root must be scalar");
    ensure_grad(*root);
    root->grad.values[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Value& n = *it;
      if (!n.requires_grad || n.grad.values.empty()) continue;
      if (n.backward_fn) {
        for (Value* p : n.parents)
          if (p->requires_grad) ensure_grad(*p);
        n.backward_fn(n);
      }
      if (n.param) {
        auto& g = n.param->grad.values;
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad.values[i];
      }
    }
  }

  static void ensure_grad(Value& v) {
    if (v.grad.values.empty()) v.grad = Tensor::zeros(v.val.shape);
  }

  size_t size() const { return nodes_.size(); }

 private:
  Value* alloc() {
    nodes_.emplace_back();
    nodes_.back().tape = this;
    return &nodes_.back();
  }

  std::deque<Value> nodes_;  // deque: stable addresses
};

}  // namespace idm::ad
