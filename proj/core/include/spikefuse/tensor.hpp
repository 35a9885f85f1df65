#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "spikefuse/common.hpp"

namespace spikefuse {

/// Thread-local switch that disables graph recording (eval / inference).
struct GradMode {
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }
};

struct NoGradGuard {
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
    bool prev;
};

template <typename S>
struct Node {
    Shape shape;
    std::vector<S> values;
    std::vector<S> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<S>>> parents;
    std::function<void(Node<S>&)> backward_fn;

    bool is_leaf() const { return parents.empty(); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), S(0));
    }
};

/// Dense n-d tensor handle. Copies share the underlying node, like a
/// reference-counted view of one graph vertex. Values are immutable once the
/// tensor participates in a graph; only gradient accumulators mutate.
template <typename S>
class Tensor {
public:
    using scalar_type = S;

    Tensor() = default;

    static Tensor from(std::vector<S> values, Shape shape) {
        check(numel(shape) == values.size(), "tensor values/shape mismatch: ", values.size(),
              " values for shape ", shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<Node<S>>();
        t.node_->shape = std::move(shape);
        t.node_->values = std::move(values);
        return t;
    }

    static Tensor full(Shape shape, S value) {
        const std::size_t n = numel(shape);
        return from(std::vector<S>(n, value), std::move(shape));
    }

    static Tensor zeros(Shape shape) { return full(std::move(shape), S(0)); }
    static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }
    static Tensor scalar(S value) { return from({value}, Shape{}); }

    static Tensor randn(Rng& rng, Shape shape, double stddev = 1.0) {
        std::vector<S> v(numel(shape));
        for (auto& x : v) x = static_cast<S>(rng.normal() * stddev);
        return from(std::move(v), std::move(shape));
    }

    static Tensor uniform(Rng& rng, Shape shape, double lo, double hi) {
        std::vector<S> v(numel(shape));
        for (auto& x : v) x = static_cast<S>(rng.uniform(lo, hi));
        return from(std::move(v), std::move(shape));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }
    std::size_t size() const { return node_->values.size(); }

    const std::vector<S>& values() const { return node_->values; }

    /// Mutable value access; meant for leaf tensors (parameter updates,
    /// in-place initialization) only.
    std::vector<S>& values_mut() { return node_->values; }

    bool requires_grad() const { return node_ && node_->requires_grad; }

    Tensor& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }

    const std::vector<S>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    std::vector<S>& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }

    void zero_grad() {
        if (node_) node_->grad.assign(node_->values.size(), S(0));
    }

    S item() const {
        check(size() == 1, "item() requires a single-element tensor, got shape ",
              shape_str(shape()));
        return node_->values[0];
    }

    S at(std::initializer_list<std::size_t> idx) const {
        check(idx.size() == ndim(), "at(): rank mismatch");
        const auto strides = row_major_strides(shape());
        std::size_t flat = 0, i = 0;
        for (auto v : idx) flat += v * strides[i++];
        return node_->values[flat];
    }

    /// A fresh leaf with copied values, cut off from the graph.
    Tensor detach() const {
        return from(node_->values, node_->shape);
    }

    /// Reverse sweep from a scalar. Gradients accumulate additively into
    /// leaves across repeated calls; non-leaf accumulators are reset per
    /// sweep so each call contributes exactly one pass.
    void backward() {
        check(defined(), "backward on undefined tensor");
        check(size() == 1, "backward requires a scalar loss, got shape ", shape_str(shape()));
        check(node_->requires_grad,
              "backward on a tensor that is not connected to any parameter");

        std::vector<Node<S>*> order;
        topo_sort(order);
        for (Node<S>* n : order) {
            // a freshly sized buffer is already zero; only carried-over
            // non-leaf accumulators need clearing
            if (n->grad.size() != n->values.size())
                n->grad.assign(n->values.size(), S(0));
            else if (!n->is_leaf())
                std::fill(n->grad.begin(), n->grad.end(), S(0));
        }
        node_->grad[0] += S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }

    std::shared_ptr<Node<S>>& node() { return node_; }
    const std::shared_ptr<Node<S>>& node() const { return node_; }

private:
    void topo_sort(std::vector<Node<S>*>& order) const {
        // iterative post-order DFS over grad-requiring ancestors
        std::unordered_set<Node<S>*> visited;
        struct Frame {
            Node<S>* n;
            std::size_t next;
        };
        std::vector<Frame> stack;
        stack.push_back({node_.get(), 0});
        visited.insert(node_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.n->parents.size()) {
                Node<S>* p = f.n->parents[f.next++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.n);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node<S>> node_;
};

/// Build the result node of an op. Graph edges are recorded only when grad
/// mode is on and some parent requires grad; otherwise the result is a
/// constant leaf and `backward` never reaches it.
template <typename S>
Tensor<S> make_op(Shape shape, std::vector<S> values, std::vector<Tensor<S>> parents,
                  std::function<void(Node<S>&)> backward_fn) {
    Tensor<S> out = Tensor<S>::from(std::move(values), std::move(shape));
    bool needs = false;
    if (GradMode::enabled())
        for (const auto& p : parents)
            if (p.requires_grad()) needs = true;
    if (needs) {
        auto& n = *out.node();
        n.requires_grad = true;
        n.parents.reserve(parents.size());
        for (auto& p : parents) n.parents.push_back(p.node());
        n.backward_fn = std::move(backward_fn);
    }
    return out;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace spikefuse
