#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stcnet/core/tensor.hpp"

namespace stcnet {

struct Parameter;

/// One vertex of the reverse-mode graph. Values are stored by shared
/// Tensor, so keeping a Var alive is cheap; gradients are allocated lazily
/// when backward first reaches the node.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn; // pulls node.grad into parents
    Parameter* param = nullptr;             // set on parameter leaves

    Tensor& ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

using Var = std::shared_ptr<Node>;

/// A learnable tensor owned by a module. The optimizer mutates `value` and
/// consumes `grad`; graphs reference the value buffer without copying.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    void zero_grad() {
        if (!grad.defined()) grad = Tensor::zeros(value.shape());
        else grad.fill(0.0);
    }
};

inline Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

inline Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

/// Returns a gradient-stopped view of v (same value, no parents).
inline Var detach(const Var& v) { return constant(v->value); }

inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return n;
}

/// Accumulates `g` into `dst->grad` if dst participates in the backward pass.
inline void accumulate(const Var& dst, const Tensor& g) {
    if (!dst->requires_grad) return;
    Tensor& acc = dst->ensure_grad();
    const double* src = g.data();
    double* d = acc.data();
    const std::size_t n = acc.numel();
    for (std::size_t i = 0; i < n; ++i) d[i] += src[i];
}

/// Reverse-mode sweep from a scalar root. Topological order is built
/// iteratively; call once per graph.
inline void backward(const Var& root) {
    STC_CHECK(root->value.numel() == 1, "backward root must be scalar");
    if (!root->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    }
}

/// Per-sample graph context. Wraps each Parameter in exactly one leaf node
/// so that concurrent samples keep private gradient buffers; the trainer
/// harvests them in a fixed order after backward.
class GraphContext {
public:
    explicit GraphContext(bool train = true) : train_(train) {}

    bool training() const { return train_; }

    Var use(Parameter& p) {
        auto it = nodes_.find(&p);
        if (it != nodes_.end()) return it->second;
        auto n = std::make_shared<Node>();
        n->value = p.value;
        n->requires_grad = train_;
        n->param = &p;
        nodes_.emplace(&p, n);
        return n;
    }

    /// Adds this sample's parameter gradients, scaled by `scale`, into the
    /// owning Parameter::grad buffers.
    void commit_grads(double scale = 1.0) const {
        for (const auto& [p, n] : nodes_) {
            if (!n->grad.defined()) continue;
            if (!p->grad.defined()) p->grad = Tensor::zeros(p->value.shape());
            double* dst = p->grad.data();
            const double* src = n->grad.data();
            for (std::size_t i = 0; i < p->grad.numel(); ++i) dst[i] += scale * src[i];
        }
    }

private:
    bool train_;
    std::unordered_map<Parameter*, Var> nodes_;
};

} // namespace stcnet
