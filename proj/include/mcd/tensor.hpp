#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "mcd/error.hpp"

namespace mcd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

// One node of the define-by-run tape. A fresh graph is recorded on every
// forward pass; only parameter leaves persist across passes, so their grad
// buffers accumulate until zero_grad().
struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily, empty until first backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_op;

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values) {
        if (shape_numel(shape) != values.size())
            throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                                 std::to_string(values.size()) + " values");
        auto n = std::make_shared<detail::TensorNode>();
        n->shape = std::move(shape);
        n->values = std::move(values);
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape) {
        std::size_t count = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(count, 0.0));
    }

    static Tensor scalar(double v) { return from(Shape{}, {v}); }

    // Trainable leaf: participates in backward and keeps its grad buffer.
    static Tensor param(Shape shape, std::vector<double> values) {
        Tensor t = from(std::move(shape), std::move(values));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->values.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    // On a temporary the span would outlive the node, so rvalues get a copy.
    std::span<const double> values() const& { return node_->values; }
    std::vector<double> values() && { return node_->values; }
    std::span<double> mutable_values() { return node_->values; }

    std::span<const double> grad() const& {
        node_->ensure_grad();
        return node_->grad;
    }
    std::vector<double> grad() && {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }

    double item() const {
        if (node_->values.size() != 1)
            throw ContractError("item(): tensor " + shape_str(node_->shape) + " is not scalar");
        return node_->values[0];
    }

    void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

    bool is_finite() const {
        for (double v : node_->values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

inline Tensor make_op_output(Shape shape, std::vector<double> values,
                             std::vector<std::shared_ptr<TensorNode>> parents,
                             std::function<void(TensorNode&)> backward_op) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_op = std::move(backward_op);
    }
    return Tensor(std::move(n));
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Visits each recorded node exactly
// once in reverse topological order; leaf grads accumulate across calls.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    auto root = loss.node();
    if (!root->requires_grad) return;

    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::TensorNode* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* node = *it;
        if (node->backward_op) node->backward_op(*node);
    }
}

}  // namespace mcd
