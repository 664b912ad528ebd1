#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mmer::nn {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape);

// Dense row-major tensor with a reverse-mode tape. A tensor is a shared
// handle to its node; ops link nodes through `parents` and a backward
// closure, and backward() replays the tape in reverse topological order.
// The graph is rebuilt every step.
template <class S>
class TensorT {
 public:
  using Scalar = S;

  struct Node {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until backward touches it
    bool requires_grad = false;
    std::vector<TensorT> parents;
    std::function<void(Node&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
      if (grad.empty()) grad.assign(data.size(), S(0));
    }
  };

  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }

  static TensorT filled(Shape shape, S value, bool requires_grad = false) {
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data.assign(shape_numel(t.node_->shape), value);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT from_vector(Shape shape, std::vector<S> values, bool requires_grad = false) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
      throw std::invalid_argument("Tensor::from_vector: " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape));
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar(S value) { return from_vector({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int64_t dim(size_t i) const { return node_->shape.at(i); }
  size_t rank() const { return node_->shape.size(); }

  std::vector<S>& data() { return node_->data; }
  const std::vector<S>& data() const { return node_->data; }
  std::vector<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }

  S item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
    return node_->data[0];
  }

  void zero_grad() { node_->grad.clear(); }

  Node* node() const { return node_.get(); }

  // Reverse-mode sweep from a scalar output.
  void backward() {
    if (numel() != 1) throw std::invalid_argument("Tensor::backward: output must be scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    topo(node_.get(), visited, order);
    node_->ensure_grad();
    node_->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  // Used by op implementations.
  static TensorT make_node(Shape shape, std::vector<S> data, std::vector<TensorT> parents,
                           std::function<void(Node&)> backward_fn) {
    TensorT t = from_vector(std::move(shape), std::move(data));
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs && grad_enabled()) {
      t.node_->requires_grad = true;
      t.node_->parents = std::move(parents);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

  static bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
  }

 private:
  static void topo(Node* n, std::unordered_set<Node*>& visited, std::vector<Node*>& order) {
    // Iterative DFS; graphs get deep enough that recursion is unsafe.
    struct Frame {
      Node* node;
      size_t next_parent;
    };
    std::vector<Frame> stack{{n, 0}};
    visited.insert(n);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node* p = f.node->parents[f.next_parent++].node();
        if (p && !visited.count(p)) {
          visited.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Disables graph construction in scope (evaluation mode).
template <class S>
struct NoGradGuardT {
  NoGradGuardT() : prev_(TensorT<S>::grad_enabled()) { TensorT<S>::grad_enabled() = false; }
  ~NoGradGuardT() { TensorT<S>::grad_enabled() = prev_; }
  NoGradGuardT(const NoGradGuardT&) = delete;

 private:
  bool prev_;
};
using NoGradGuard = NoGradGuardT<float>;

}  // namespace mmer::nn
