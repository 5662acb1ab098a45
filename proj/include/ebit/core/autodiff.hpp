#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ebit/core/tensor.hpp"

namespace ebit {

// Reverse-mode autodiff over Tensor<T>. Each op builds a Node holding the
// forward value and a pull-back closure; backward() walks the graph in
// reverse topological order. Nodes whose inputs do not require gradients
// carry no closure, so frozen-parameter passes skip both the gradient GEMMs
// and the cached im2col buffers.

template <class T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backfn;

    void ensure_grad() {
        if (grad.size() != val.size()) grad = Tensor<T>(val.shape());
    }

    void accum_grad(const T* g) {
        ensure_grad();
        T* dst = grad.data();
        const int64_t n = grad.size();
        for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
    }

    void zero_grad() {
        if (grad.size() == val.size())
            grad.fill(T(0));
        else
            grad = Tensor<T>(val.shape());
    }
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

    // Leaf construction.
    static Var leaf(Tensor<T> value, bool requires_grad) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

    bool valid() const { return static_cast<bool>(n_); }

    // Var has pointer semantics: mutators act on the shared node.
    const Tensor<T>& val() const { return n_->val; }
    Tensor<T>& mutable_val() const { return n_->val; }
    Tensor<T>& grad() const {
        n_->ensure_grad();
        return n_->grad;
    }
    const Shape& shape() const { return n_->val.shape(); }
    int dim(int i) const { return n_->val.dim(i); }
    int64_t size() const { return n_->val.size(); }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) const { n_->requires_grad = rg; }
    void zero_grad() const { n_->zero_grad(); }

    std::shared_ptr<Node<T>> node() const { return n_; }
    Node<T>* raw() const { return n_.get(); }

    // New leaf sharing no graph history; value is copied.
    Var detach() const { return leaf(n_->val, false); }

private:
    std::shared_ptr<Node<T>> n_;
};

template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backfn) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backfn = std::move(backfn);
    }
    return Var<T>(std::move(n));
}

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// reachable node that requires_grad; leaf parameter gradients persist until
// explicitly zeroed (the optimizer does this after each step).
template <class T>
void backward(const Var<T>& root) {
    if (root.size() != 1) throw ShapeError("backward root must be a scalar");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root.raw(), 0);
    visited.insert(root.raw());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Temporaries start from a clean slate; leaves keep accumulating.
    for (Node<T>* n : order)
        if (n->backfn) n->zero_grad();

    root.raw()->ensure_grad();
    root.raw()->grad[0] = T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backfn) n->backfn(*n);
    }
}

}  // namespace ebit
