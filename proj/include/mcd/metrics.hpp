#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "mcd/error.hpp"

namespace mcd {

// L1 score of Eq-style two-head disagreement with its ground truth,
// the unit every metric consumes. Positive class is OOD for FPR@TPR,
// detection error and AUROC; higher score means more OOD.
struct ScoredSample {
    double score = 0.0;
    bool is_ood = false;
};

struct MetricsReport {
    double fpr_at_95_tpr = 0.0;
    double detection_error = 0.0;
    double auroc = 0.0;
    double aupr_in = 0.0;
    double aupr_out = 0.0;
    double mean_discrepancy_id = 0.0;
    double mean_discrepancy_ood = 0.0;
    double threshold_used = 1.0;
    std::size_t n_id = 0;
    std::size_t n_ood = 0;
};

// Sum_k |p1_k - p2_k|, bounded by 2.
inline double l1_score(std::span<const double> p1_row, std::span<const double> p2_row) {
    if (p1_row.size() != p2_row.size())
        throw DimensionError("l1_score: row lengths differ");
    double s1 = 0.0, s2 = 0.0, d = 0.0;
    for (std::size_t i = 0; i < p1_row.size(); ++i) {
        s1 += p1_row[i];
        s2 += p2_row[i];
        d += std::abs(p1_row[i] - p2_row[i]);
    }
    if (std::abs(s1 - 1.0) > 1e-9 || std::abs(s2 - 1.0) > 1e-9)
        throw ContractError("l1_score: rows are not probability vectors");
    return d;
}

// Strict inequality: a sample exactly at the threshold counts as ID.
inline bool classify_ood(double score, double delta = 1.0) { return score > delta; }

namespace detail {

struct ClassCounts {
    std::size_t n_pos = 0, n_neg = 0;
};

inline ClassCounts require_both_classes(const std::vector<ScoredSample>& samples,
                                        const char* who) {
    ClassCounts c;
    for (const auto& s : samples) (s.is_ood ? c.n_pos : c.n_neg)++;
    if (c.n_pos == 0 || c.n_neg == 0)
        throw MetricsError(std::string(who) + ": need at least one ID and one OOD sample");
    return c;
}

// Sorted unique score values, descending.
inline std::vector<double> unique_scores_desc(const std::vector<ScoredSample>& samples) {
    std::vector<double> t;
    t.reserve(samples.size());
    for (const auto& s : samples) t.push_back(s.score);
    std::sort(t.begin(), t.end(), std::greater<>());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

}  // namespace detail

// Minimum FPR over thresholds (predicted OOD when score >= t, t swept over
// unique scores) that reach TPR >= tpr_target.
inline double fpr_at_tpr(const std::vector<ScoredSample>& samples, double tpr_target = 0.95) {
    auto counts = detail::require_both_classes(samples, "fpr_at_tpr");
    double best = 1.0;
    for (double t : detail::unique_scores_desc(samples)) {
        std::size_t tp = 0, fp = 0;
        for (const auto& s : samples)
            if (s.score >= t) (s.is_ood ? tp : fp)++;
        const double tpr = (double)tp / (double)counts.n_pos;
        if (tpr >= tpr_target) best = std::min(best, (double)fp / (double)counts.n_neg);
    }
    return best;
}

// Min over thresholds of (FPR + FNR)/2; the all-ID prediction (t = +inf)
// participates in the sweep.
inline double detection_error(const std::vector<ScoredSample>& samples) {
    auto counts = detail::require_both_classes(samples, "detection_error");
    double best = 0.5;  // t = +inf: FPR 0, FNR 1
    for (double t : detail::unique_scores_desc(samples)) {
        std::size_t tp = 0, fp = 0;
        for (const auto& s : samples)
            if (s.score >= t) (s.is_ood ? tp : fp)++;
        const double fpr = (double)fp / (double)counts.n_neg;
        const double fnr = 1.0 - (double)tp / (double)counts.n_pos;
        best = std::min(best, 0.5 * (fpr + fnr));
    }
    return best;
}

// Trapezoidal area under the ROC curve with tied scores grouped; equals the
// Mann-Whitney statistic P(s_ood > s_id) + 0.5 P(equal).
inline double auroc(const std::vector<ScoredSample>& samples) {
    auto counts = detail::require_both_classes(samples, "auroc");
    std::vector<ScoredSample> sorted = samples;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
    double area = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i, dtp = 0, dfp = 0;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) {
            (sorted[j].is_ood ? dtp : dfp)++;
            ++j;
        }
        // trapezoid over the tie group
        area += (double)dfp / counts.n_neg * ((double)tp + 0.5 * (double)dtp) / counts.n_pos;
        tp += dtp;
        fp += dfp;
        i = j;
    }
    return area;
}

enum class PositiveClass { In, Out };

// Step-function area under precision/recall. For positive=Out the sweep runs
// high-to-low (predicted positive: score >= t); for positive=In low-to-high
// (score <= t). Precision at an empty prediction set is 1.
inline double aupr(const std::vector<ScoredSample>& samples, PositiveClass positive) {
    detail::require_both_classes(samples, "aupr");
    const bool pos_is_ood = (positive == PositiveClass::Out);
    std::size_t n_pos = 0;
    for (const auto& s : samples)
        if (s.is_ood == pos_is_ood) ++n_pos;
    auto thresholds = detail::unique_scores_desc(samples);
    if (!pos_is_ood) std::reverse(thresholds.begin(), thresholds.end());
    double area = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t tp = 0, pred = 0;
        for (const auto& s : samples) {
            const bool predicted = pos_is_ood ? (s.score >= t) : (s.score <= t);
            if (!predicted) continue;
            ++pred;
            if (s.is_ood == pos_is_ood) ++tp;
        }
        const double recall = (double)tp / (double)n_pos;
        const double precision = pred == 0 ? 1.0 : (double)tp / (double)pred;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

inline MetricsReport compute_metrics(const std::vector<ScoredSample>& samples,
                                     double delta = 1.0) {
    auto counts = detail::require_both_classes(samples, "compute_metrics");
    MetricsReport r;
    r.fpr_at_95_tpr = fpr_at_tpr(samples, 0.95);
    r.detection_error = detection_error(samples);
    r.auroc = auroc(samples);
    r.aupr_in = aupr(samples, PositiveClass::In);
    r.aupr_out = aupr(samples, PositiveClass::Out);
    r.threshold_used = delta;
    r.n_ood = counts.n_pos;
    r.n_id = counts.n_neg;
    return r;
}

}  // namespace mcd
