#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mcd/model.hpp"
#include "mcd/ops.hpp"

namespace mcd {

// Hinge cap on the mean discrepancy pursued during fine-tuning.
struct Margin {
    double m = 1.2;
    Margin() = default;
    explicit Margin(double value) : m(value) {
        if (m <= 0.0) throw ConfigError("margin: m must be positive");
    }
};

struct LossValue {
    Tensor value;  // scalar, attached to the graph
    std::map<std::string, double> breakdown;
};

inline constexpr double kLogEps = 1e-12;

namespace detail {

inline void check_prob_rows(const Tensor& p, const char* who) {
    const auto& s = p.shape();
    if (s.size() != 2) throw DimensionError(std::string(who) + ": expected [n,K] probabilities");
    const auto v = p.values();
    for (std::size_t i = 0; i < s[0]; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < s[1]; ++j) row += v[i * s[1] + j];
        if (std::abs(row - 1.0) > 1e-9)
            throw ContractError(std::string(who) + ": row " + std::to_string(i) +
                                " sums to " + std::to_string(row) + ", not 1");
    }
}

}  // namespace detail

// Per-row Shannon entropy in nats: H(p) = -sum_k p_k ln(p_k + eps).
inline Tensor entropy(const Tensor& p) {
    detail::check_prob_rows(p, "entropy");
    return scale(row_sum(mul(p, log_eps(p, kLogEps))), -1.0);
}

// Per-sample H(p1) - H(p2); positive when head 1 is the more uncertain one.
inline Tensor discrepancy(const Tensor& p1, const Tensor& p2) {
    if (p1.shape() != p2.shape())
        throw DimensionError("discrepancy: shape mismatch " + shape_str(p1.shape()) + " vs " +
                             shape_str(p2.shape()));
    return sub(entropy(p1), entropy(p2));
}

// Mean over the batch of -[ln p1(y|x) + ln p2(y|x)]; both heads contribute.
inline LossValue supervised_loss(const TwoHeadModel& model, const Tensor& batch_x,
                                 const std::vector<std::size_t>& batch_y) {
    for (std::size_t i = 0; i < batch_y.size(); ++i)
        if (batch_y[i] >= model.cfg.num_classes)
            throw DataError("supervised_loss: label " + std::to_string(batch_y[i]) +
                            " out of range at sample " + std::to_string(i));
    auto [p1, p2] = probabilities(model, batch_x);
    Tensor nll1 = scale(mean(log_eps(pick_rows(p1, batch_y), kLogEps)), -1.0);
    Tensor nll2 = scale(mean(log_eps(pick_rows(p2, batch_y), kLogEps)), -1.0);
    Tensor total = add(nll1, nll2);
    return {total, {{"sup", total.item()}}};
}

// max(m - mean discrepancy over the batch, 0). Minimizing this pushes the
// mean discrepancy up until it reaches m, where the hinge goes flat.
inline LossValue unsupervised_loss(const TwoHeadModel& model, const Tensor& batch_ul,
                                   const Margin& margin) {
    if (batch_ul.shape().empty() || batch_ul.shape()[0] == 0)
        throw ContractError("unsupervised_loss: empty unlabeled batch");
    auto [p1, p2] = probabilities(model, batch_ul);
    Tensor mean_d = mean(discrepancy(p1, p2));
    Tensor hinge = relu(sub_from(margin.m, mean_d));
    return {hinge, {{"unsup", hinge.item()}, {"discrepancy_mean", mean_d.item()}}};
}

// Step B objective: supervised + hinged discrepancy on one graph, so a
// single backward pass reaches every parameter group.
inline LossValue combined_loss(const TwoHeadModel& model, const Tensor& batch_in,
                               const std::vector<std::size_t>& batch_y, const Tensor& batch_ul,
                               const Margin& margin) {
    if (batch_in.shape().empty() || batch_in.shape()[0] == 0 || batch_ul.shape().empty() ||
        batch_ul.shape()[0] == 0)
        throw ContractError("combined_loss: empty batch");
    if (batch_in.shape()[0] != batch_ul.shape()[0])
        throw ContractError("combined_loss: labeled batch size " +
                            std::to_string(batch_in.shape()[0]) + " != unlabeled " +
                            std::to_string(batch_ul.shape()[0]));
    LossValue sup = supervised_loss(model, batch_in, batch_y);
    LossValue unsup = unsupervised_loss(model, batch_ul, margin);
    LossValue out;
    out.value = add(sup.value, unsup.value);
    out.breakdown = sup.breakdown;
    out.breakdown.insert(unsup.breakdown.begin(), unsup.breakdown.end());
    return out;
}

}  // namespace mcd
