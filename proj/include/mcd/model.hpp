#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mcd/ops.hpp"
#include "mcd/tensor.hpp"

namespace mcd {

enum class InputKind { Vector, Image };

// Shared extractor E feeding two single-linear-layer heads F1, F2.
// Vector inputs run through an MLP (hidden widths + relu); image inputs
// through conv3x3-relu-avgpool blocks ending in global average pooling.
struct TwoHeadConfig {
    InputKind input_kind = InputKind::Vector;
    std::size_t input_dim = 2;                       // vector inputs
    std::size_t channels = 1, height = 8, width = 8; // image inputs
    std::size_t num_classes = 4;
    std::vector<std::size_t> hidden = {64, 64};      // MLP widths or conv channels
    std::uint64_t seed_extractor = 1;
    std::uint64_t seed_head1 = 2;
    std::uint64_t seed_head2 = 3;

    std::size_t feature_dim() const { return hidden.empty() ? 0 : hidden.back(); }

    void validate() const {
        if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
        if (hidden.empty()) throw ConfigError("model: extractor needs at least one layer");
        for (std::size_t i = 0; i < hidden.size(); ++i)
            if (hidden[i] < 1)
                throw ConfigError("model: layer " + std::to_string(i) + " has width 0");
        if (seed_head1 == seed_head2)
            throw ConfigError("model: seed_head1 and seed_head2 must differ");
        if (input_kind == InputKind::Vector && input_dim < 1)
            throw ConfigError("model: input_dim must be >= 1");
        if (input_kind == InputKind::Image && (channels < 1 || height < 1 || width < 1))
            throw ConfigError("model: image dims must be >= 1");
    }
};

namespace detail {

inline std::vector<double> fan_in_uniform(std::mt19937_64& rng, std::size_t count,
                                          std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt((double)fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> out(count);
    for (auto& v : out) v = dist(rng);
    return out;
}

}  // namespace detail

struct TwoHeadModel {
    TwoHeadConfig cfg;
    // Per extractor layer: weight + bias. Vector: W [in x out], b [out].
    // Image: kernel [co,ci,3,3], b [co].
    std::vector<Tensor> extractor_weights;
    std::vector<Tensor> extractor_biases;
    Tensor head1_weight, head1_bias;  // [feat x K], [K]
    Tensor head2_weight, head2_bias;

    std::vector<Tensor> extractor_params() const {
        std::vector<Tensor> out;
        for (std::size_t i = 0; i < extractor_weights.size(); ++i) {
            out.push_back(extractor_weights[i]);
            out.push_back(extractor_biases[i]);
        }
        return out;
    }
    std::vector<Tensor> head1_params() const { return {head1_weight, head1_bias}; }
    std::vector<Tensor> head2_params() const { return {head2_weight, head2_bias}; }

    // Disjoint, exhaustive partition of everything trainable.
    std::vector<Tensor> all_params() const {
        auto out = extractor_params();
        for (auto& t : head1_params()) out.push_back(t);
        for (auto& t : head2_params()) out.push_back(t);
        return out;
    }

    std::vector<double> snapshot() const {
        std::vector<double> flat;
        for (const auto& p : all_params())
            flat.insert(flat.end(), p.values().begin(), p.values().end());
        return flat;
    }

    void restore(const std::vector<double>& flat) {
        std::size_t pos = 0;
        for (auto& p : all_params()) {
            auto v = p.mutable_values();
            if (pos + v.size() > flat.size())
                throw ContractError("restore: snapshot too short");
            std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
            pos += v.size();
        }
        if (pos != flat.size()) throw ContractError("restore: snapshot size mismatch");
    }
};

inline TwoHeadModel init_model(const TwoHeadConfig& cfg) {
    cfg.validate();
    TwoHeadModel m;
    m.cfg = cfg;
    std::mt19937_64 rng_e(cfg.seed_extractor);
    if (cfg.input_kind == InputKind::Vector) {
        std::size_t prev = cfg.input_dim;
        for (std::size_t w : cfg.hidden) {
            m.extractor_weights.push_back(
                Tensor::param({prev, w}, detail::fan_in_uniform(rng_e, prev * w, prev)));
            m.extractor_biases.push_back(Tensor::param({w}, std::vector<double>(w, 0.0)));
            prev = w;
        }
    } else {
        std::size_t prev_c = cfg.channels;
        for (std::size_t c : cfg.hidden) {
            m.extractor_weights.push_back(Tensor::param(
                {c, prev_c, 3, 3},
                detail::fan_in_uniform(rng_e, c * prev_c * 9, prev_c * 9)));
            m.extractor_biases.push_back(Tensor::param({c}, std::vector<double>(c, 0.0)));
            prev_c = c;
        }
    }
    const std::size_t feat = cfg.feature_dim(), k = cfg.num_classes;
    std::mt19937_64 rng_h1(cfg.seed_head1), rng_h2(cfg.seed_head2);
    m.head1_weight = Tensor::param({feat, k}, detail::fan_in_uniform(rng_h1, feat * k, feat));
    m.head1_bias = Tensor::param({k}, std::vector<double>(k, 0.0));
    m.head2_weight = Tensor::param({feat, k}, detail::fan_in_uniform(rng_h2, feat * k, feat));
    m.head2_bias = Tensor::param({k}, std::vector<double>(k, 0.0));
    return m;
}

inline Tensor extract_features(const TwoHeadModel& m, const Tensor& batch) {
    if (m.cfg.input_kind == InputKind::Vector) {
        if (batch.shape().size() != 2 || batch.shape()[1] != m.cfg.input_dim)
            throw DimensionError("forward: expected batch [n," + std::to_string(m.cfg.input_dim) +
                                 "], got " + shape_str(batch.shape()));
        Tensor h = batch;
        for (std::size_t i = 0; i < m.extractor_weights.size(); ++i)
            h = relu(add_bias(matmul(h, m.extractor_weights[i]), m.extractor_biases[i]));
        return h;
    }
    if (batch.shape().size() != 4 || batch.shape()[1] != m.cfg.channels ||
        batch.shape()[2] != m.cfg.height || batch.shape()[3] != m.cfg.width)
        throw DimensionError("forward: image batch shape " + shape_str(batch.shape()) +
                             " does not match config");
    Tensor h = batch;
    for (std::size_t i = 0; i < m.extractor_weights.size(); ++i)
        h = avgpool2d(relu(add_bias(conv2d(h, m.extractor_weights[i]), m.extractor_biases[i])));
    return global_avgpool(h);
}

// Both heads consume the same extractor output tensor, so backward
// accumulates both heads' gradients into E.
inline std::pair<Tensor, Tensor> forward(const TwoHeadModel& m, const Tensor& batch) {
    Tensor feat = extract_features(m, batch);
    Tensor l1 = add_bias(matmul(feat, m.head1_weight), m.head1_bias);
    Tensor l2 = add_bias(matmul(feat, m.head2_weight), m.head2_bias);
    return {l1, l2};
}

inline std::pair<Tensor, Tensor> probabilities(const TwoHeadModel& m, const Tensor& batch) {
    auto [l1, l2] = forward(m, batch);
    return {softmax(l1), softmax(l2)};
}

}  // namespace mcd
