#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "mcd/data.hpp"
#include "mcd/metrics.hpp"
#include "mcd/model.hpp"

namespace mcd {

struct SampleScore {
    double l1 = 0.0;
    double max_p1 = 0.0;  // Fig.5-style confidence of each head
    double max_p2 = 0.0;
    double discrepancy = 0.0;  // H(p1) - H(p2), nats
};

namespace detail {

inline double row_entropy(std::span<const double> row) {
    double h = 0.0;
    for (double p : row) h -= p * std::log(p + 1e-12);
    return h;
}

}  // namespace detail

inline Shape sample_shape(const TwoHeadConfig& cfg) {
    if (cfg.input_kind == InputKind::Vector) return {cfg.input_dim};
    return {cfg.channels, cfg.height, cfg.width};
}

// Score a list of feature rows in batches through the two heads.
inline std::vector<SampleScore> score_samples(const TwoHeadModel& model,
                                              const std::vector<std::vector<double>>& xs,
                                              std::size_t batch_size = 256) {
    std::vector<SampleScore> out;
    out.reserve(xs.size());
    const Shape shp = sample_shape(model.cfg);
    const std::size_t k = model.cfg.num_classes;
    for (std::size_t start = 0; start < xs.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, xs.size() - start);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), start);
        auto [p1, p2] = probabilities(model, stack_batch(xs, idx, shp));
        const auto v1 = p1.values(), v2 = p2.values();
        for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> r1(v1.data() + i * k, k), r2(v2.data() + i * k, k);
            SampleScore s;
            s.l1 = l1_score(r1, r2);
            s.max_p1 = *std::max_element(r1.begin(), r1.end());
            s.max_p2 = *std::max_element(r2.begin(), r2.end());
            s.discrepancy = detail::row_entropy(r1) - detail::row_entropy(r2);
            out.push_back(s);
        }
    }
    return out;
}

// Full evaluation of a trained model on a labeled ID/OOD test set.
inline MetricsReport evaluate(const TwoHeadModel& model, const std::vector<EvalSample>& test,
                              double delta = 1.0) {
    std::vector<std::vector<double>> xs;
    xs.reserve(test.size());
    for (const auto& s : test) xs.push_back(s.x);
    auto scores = score_samples(model, xs);
    std::vector<ScoredSample> scored;
    scored.reserve(test.size());
    double disc_id = 0.0, disc_ood = 0.0;
    std::size_t n_id = 0, n_ood = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        scored.push_back({scores[i].l1, test[i].is_ood});
        if (test[i].is_ood) {
            disc_ood += scores[i].discrepancy;
            ++n_ood;
        } else {
            disc_id += scores[i].discrepancy;
            ++n_id;
        }
    }
    MetricsReport r = compute_metrics(scored, delta);
    r.mean_discrepancy_id = n_id ? disc_id / (double)n_id : 0.0;
    r.mean_discrepancy_ood = n_ood ? disc_ood / (double)n_ood : 0.0;
    return r;
}

// Fraction of ID samples the given head classifies correctly.
inline double id_accuracy(const TwoHeadModel& model, const std::vector<EvalSample>& samples,
                          int head) {
    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> labels;
    for (const auto& s : samples)
        if (!s.is_ood) {
            xs.push_back(s.x);
            labels.push_back(s.label);
        }
    if (xs.empty()) throw MetricsError("id_accuracy: no ID samples");
    const Shape shp = sample_shape(model.cfg);
    const std::size_t k = model.cfg.num_classes;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < xs.size(); start += 256) {
        const std::size_t n = std::min<std::size_t>(256, xs.size() - start);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), start);
        auto [l1, l2] = forward(model, stack_batch(xs, idx, shp));
        const auto lv = (head == 1 ? l1 : l2).values();
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t arg = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (lv[i * k + j] > lv[i * k + arg]) arg = j;
            if (arg == labels[start + i]) ++correct;
        }
    }
    return (double)correct / (double)xs.size();
}

// Max-softmax OOD baseline of the pre-trained classifier: score = 1 - max_k p1.
inline std::vector<ScoredSample> max_softmax_baseline(const TwoHeadModel& model,
                                                      const std::vector<EvalSample>& test) {
    std::vector<std::vector<double>> xs;
    for (const auto& s : test) xs.push_back(s.x);
    auto scores = score_samples(model, xs);
    std::vector<ScoredSample> out;
    out.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i)
        out.push_back({1.0 - scores[i].max_p1, test[i].is_ood});
    return out;
}

}  // namespace mcd
