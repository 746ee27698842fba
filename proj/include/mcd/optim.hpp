#pragma once

#include <vector>

#include "mcd/tensor.hpp"

namespace mcd {

// Plain SGD: value <- value - lr * grad for every parameter element.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Tensor> params, double learning_rate)
        : params_(std::move(params)), lr_(learning_rate) {
        if (lr_ <= 0.0 && lr_ != 0.0)
            throw ConfigError("sgd: learning rate must be >= 0");
    }

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

    void step() {
        for (auto& p : params_) {
            auto v = p.mutable_values();
            auto g = p.grad();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr_ * g[i];
        }
    }

    void zero_grads() {
        for (auto& p : params_) p.zero_grad();
    }

private:
    std::vector<Tensor> params_;
    double lr_;
};

}  // namespace mcd
