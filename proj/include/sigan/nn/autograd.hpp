#pragma once

// Reverse-mode automatic differentiation over NCHW tensors.
//
// A Var is a shared handle to a graph node. Ops build nodes whose backward
// closure pushes the node's gradient into its parents. The graph is a DAG of
// shared_ptr edges from child to parent; closures hold raw pointers only, so
// dropping the last handle to the root frees the whole tape.

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "sigan/nn/tensor.hpp"

namespace sigan::nn {

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward;

    Tensor<T>& ensure_grad() {
        if (grad.empty() && value.numel() > 0) grad = Tensor<T>(value.shape());
        return grad;
    }
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    [[nodiscard]] const Tensor<T>& value() const { return node_->value; }
    [[nodiscard]] Tensor<T>& mutable_value() { return node_->value; }
    [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
    [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
    [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }

    /// Gradient buffer; allocated (zeroed) on first access.
    [[nodiscard]] Tensor<T>& grad() const { return node_->ensure_grad(); }
    [[nodiscard]] bool has_grad() const { return node_ && !node_->grad.empty(); }
    void zero_grad() const {
        if (!node_->grad.empty()) node_->grad.fill(T(0));
    }

    [[nodiscard]] Node<T>* node() const { return node_.get(); }
    [[nodiscard]] const std::shared_ptr<Node<T>>& shared() const { return node_; }

    /// Scalar value of a single-element Var.
    [[nodiscard]] T item() const {
        if (node_->value.numel() != 1) throw ShapeError("item() on non-scalar " + shape().str());
        return node_->value[0];
    }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

[[nodiscard]] inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording in the current thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    return Var<T>(std::move(node));
}

template <class T>
Var<T> leaf(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var<T>(std::move(node));
}

template <class T>
Var<T> detach(const Var<T>& x) {
    return constant(x.value());
}

/// Creates an op result. `make_backward` is invoked only when the result
/// participates in a graph; it receives the result node and returns the closure.
template <class T, class MakeBackward>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, MakeBackward&& make_backward) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    bool any = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) any = any || in.requires_grad();
    }
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.shared());
        node->backward = make_backward(node.get());
    }
    return Var<T>(std::move(node));
}

/// Accumulates d(root)/d(leaf) into every reachable leaf's grad. The root's
/// seed gradient is ones unless `seed` is supplied.
template <class T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr) {
    if (!root.requires_grad()) return;
    std::vector<Node<T>*> order;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    std::unordered_set<Node<T>*> visited;
    auto mark = [&](Node<T>* n) { return visited.insert(n).second; };
    // Iterative post-order DFS: every node lands after all of its parents.
    mark(root.node());
    stack.emplace_back(root.node(), 0);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p->requires_grad && mark(p)) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    Tensor<T>& g = root.node()->ensure_grad();
    if (seed) {
        require_same_shape(seed->shape(), g.shape(), "backward seed");
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += (*seed)[i];
    } else {
        for (auto& v : g.data()) v += T(1);
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) n->backward();
    }
}

}  // namespace sigan::nn
