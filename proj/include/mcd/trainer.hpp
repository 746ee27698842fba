#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mcd/data.hpp"
#include "mcd/losses.hpp"
#include "mcd/metrics.hpp"
#include "mcd/model.hpp"
#include "mcd/optim.hpp"
#include "mcd/scoring.hpp"

namespace mcd {

enum class EarlyStopMetric { Auroc, FprAt95Tpr, DetectionError, AuprIn, AuprOut };

struct TrainConfig {
    std::size_t pretrain_epochs = 100;
    std::size_t finetune_epochs = 10;
    double lr_pretrain = 0.1;
    double lr_finetune = 0.1;
    std::vector<double> lr_drop_points = {0.5, 0.75};  // fractions of pre-training
    double lr_drop_factor = 10.0;
    std::size_t batch_size = 64;
    double margin = 1.2;
    std::uint64_t seed = 0;
    EarlyStopMetric early_stop_metric = EarlyStopMetric::Auroc;
    bool freeze_extractor_in_step_b = false;  // ablation switch
    double delta = 1.0;

    void validate() const {
        if (pretrain_epochs < 1 || finetune_epochs < 1)
            throw ConfigError("train: epochs must be >= 1");
        if (lr_pretrain <= 0.0 && lr_pretrain != 0.0)
            throw ConfigError("train: lr_pretrain must be >= 0");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        for (double p : lr_drop_points)
            if (p <= 0.0 || p >= 1.0) throw ConfigError("train: lr drop points must be in (0,1)");
        if (margin <= 0.0) throw ConfigError("train: margin must be positive");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double sup_loss = 0.0;
    double unsup_loss = 0.0;
    double disc_labeled = 0.0;    // mean Eq.1 discrepancy on labeled ID batches
    double disc_unlabeled = 0.0;  // mean on unlabeled batches
    double val_metric = 0.0;
    double acc_head1 = 0.0;
    double acc_head2 = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_metric = 0.0;
};

inline double scheduled_lr(const TrainConfig& cfg, std::size_t epoch /*0-based*/) {
    double lr = cfg.lr_pretrain;
    const double progress = (double)epoch / (double)cfg.pretrain_epochs;
    for (double p : cfg.lr_drop_points)
        if (progress >= p) lr /= cfg.lr_drop_factor;
    return lr;
}

inline bool metric_higher_is_better(EarlyStopMetric m) {
    return m == EarlyStopMetric::Auroc || m == EarlyStopMetric::AuprIn ||
           m == EarlyStopMetric::AuprOut;
}

inline double pick_metric(const MetricsReport& r, EarlyStopMetric m) {
    switch (m) {
        case EarlyStopMetric::Auroc: return r.auroc;
        case EarlyStopMetric::FprAt95Tpr: return r.fpr_at_95_tpr;
        case EarlyStopMetric::DetectionError: return r.detection_error;
        case EarlyStopMetric::AuprIn: return r.aupr_in;
        case EarlyStopMetric::AuprOut: return r.aupr_out;
    }
    return 0.0;
}

// Shuffled batch stream over an index range that restarts (with reshuffle)
// when exhausted, so every Step B sees a full batch. When the restart falls
// mid-batch, the head of the fresh permutation is patched so no sample
// repeats inside a single batch (possible whenever batch_size <= pool size).
class UnlabeledCycler {
public:
    UnlabeledCycler(std::size_t pool_size, std::uint64_t seed)
        : order_(pool_size), rng_(seed) {
        std::iota(order_.begin(), order_.end(), 0);
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    std::vector<std::size_t> next(std::size_t batch_size) {
        std::vector<std::size_t> batch;
        batch.reserve(batch_size);
        while (batch.size() < batch_size) {
            if (pos_ == order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                pos_ = 0;
                if (batch.size() + order_.size() >= batch_size && !batch.empty()) {
                    // move colliding head elements past the batch boundary
                    const std::size_t take = batch_size - batch.size();
                    for (std::size_t i = 0; i < take; ++i) {
                        if (std::find(batch.begin(), batch.end(), order_[i]) != batch.end()) {
                            for (std::size_t j = take; j < order_.size(); ++j) {
                                if (std::find(batch.begin(), batch.end(), order_[j]) ==
                                    batch.end()) {
                                    std::swap(order_[i], order_[j]);
                                    break;
                                }
                            }
                        }
                    }
                }
            }
            batch.push_back(order_[pos_++]);
        }
        return batch;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::mt19937_64 rng_;
};

namespace detail {

inline void check_finite_loss(double v, const char* phase, std::size_t epoch,
                              std::size_t batch) {
    if (!std::isfinite(v))
        throw TrainingError(std::string(phase) + ": loss diverged (NaN/Inf) at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batch));
}

inline double mean_batch_discrepancy(const TwoHeadModel& model, const Tensor& batch) {
    auto [p1, p2] = probabilities(model, batch);
    Tensor d = discrepancy(p1, p2);
    double acc = 0.0;
    for (double v : d.values()) acc += v;
    return acc / (double)d.size();
}

inline double train_accuracy(const TwoHeadModel& model,
                             const std::vector<LabeledSample>& data, int head) {
    std::vector<EvalSample> ev;
    ev.reserve(data.size());
    for (const auto& s : data) ev.push_back({s.x, false, s.y});
    return id_accuracy(model, ev, head);
}

}  // namespace detail

// Supervised pre-training with the stepped LR schedule. The caller should
// snapshot the result: it is the "original classifier" kept for ID
// classification after fine-tuning.
inline TrainLog pretrain(TwoHeadModel& model, const std::vector<LabeledSample>& train,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw DataError("pretrain: empty labeled set");
    const Shape shp = sample_shape(model.cfg);
    SgdOptimizer opt(model.all_params(), cfg.lr_pretrain);
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> ys;
    for (const auto& s : train) {
        xs.push_back(s.x);
        ys.push_back(s.y);
    }

    TrainLog log;
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        opt.set_learning_rate(scheduled_lr(cfg, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sup_sum = 0.0, disc_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + n);
            std::vector<std::size_t> by;
            for (std::size_t i : idx) by.push_back(ys[i]);
            Tensor bx = stack_batch(xs, idx, shp);
            LossValue loss = supervised_loss(model, bx, by);
            detail::check_finite_loss(loss.value.item(), "pretrain", epoch, n_batches);
            opt.zero_grads();
            backward(loss.value);
            opt.step();
            // sample-weighted so the epoch mean is independent of how the
            // shuffle groups a trailing short batch
            sup_sum += loss.value.item() * (double)n;
            disc_sum += detail::mean_batch_discrepancy(model, bx) * (double)n;
            ++n_batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.sup_loss = sup_sum / (double)order.size();
        rec.disc_labeled = disc_sum / (double)order.size();
        rec.acc_head1 = detail::train_accuracy(model, train, 1);
        rec.acc_head2 = detail::train_accuracy(model, train, 2);
        log.epochs.push_back(rec);
    }
    log.best_epoch = log.epochs.size() - 1;
    return log;
}

// The alternating fine-tuning loop. Each iteration takes one Step A
// (supervised, fresh labeled batch) and one Step B (combined loss over a
// second fresh labeled batch plus an equal-size unlabeled batch). One epoch
// is one Step A pass over the labeled set. After each epoch the validation
// holdout is scored with the L1 rule and the best snapshot is kept.
inline TrainLog finetune(TwoHeadModel& model, const std::vector<LabeledSample>& train,
                         const std::vector<std::vector<double>>& unlabeled_x,
                         const std::vector<EvalSample>& validation, const TrainConfig& cfg,
                         const HiddenTruth* truth_to_lock = nullptr) {
    cfg.validate();
    if (unlabeled_x.empty()) throw ContractError("finetune: empty unlabeled set");
    if (train.empty()) throw DataError("finetune: empty labeled set");

    std::optional<TruthLockGuard> guard;
    if (truth_to_lock) guard.emplace(*truth_to_lock);

    const Shape shp = sample_shape(model.cfg);
    const Margin margin(cfg.margin);
    SgdOptimizer opt_all(model.all_params(), cfg.lr_finetune);
    std::vector<Tensor> heads_only = model.head1_params();
    for (auto& t : model.head2_params()) heads_only.push_back(t);
    SgdOptimizer opt_heads(heads_only, cfg.lr_finetune);
    SgdOptimizer& opt_b = cfg.freeze_extractor_in_step_b ? opt_heads : opt_all;

    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> ys;
    for (const auto& s : train) {
        xs.push_back(s.x);
        ys.push_back(s.y);
    }

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    UnlabeledCycler labeled_b(train.size(), cfg.seed ^ 0x5851f42d4c957f2dull);
    UnlabeledCycler unlabeled(unlabeled_x.size(), cfg.seed ^ 0x14057b7ef767814full);

    auto validate = [&]() {
        return pick_metric(evaluate(model, validation, cfg.delta), cfg.early_stop_metric);
    };

    TrainLog log;
    const bool higher_better = metric_higher_is_better(cfg.early_stop_metric);
    std::vector<double> best_params = model.snapshot();
    double best_val = higher_better ? -1.0 : 2.0;
    std::size_t best_epoch = 0;

    for (std::size_t epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sup_sum = 0.0, unsup_sum = 0.0, disc_lab = 0.0, disc_ul = 0.0;
        std::size_t n_iter = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            // Step A: supervised on a labeled batch
            std::vector<std::size_t> idx_a(order.begin() + start, order.begin() + start + n);
            std::vector<std::size_t> by_a;
            for (std::size_t i : idx_a) by_a.push_back(ys[i]);
            Tensor bx_a = stack_batch(xs, idx_a, shp);
            LossValue loss_a = supervised_loss(model, bx_a, by_a);
            detail::check_finite_loss(loss_a.value.item(), "finetune/stepA", epoch, n_iter);
            opt_all.zero_grads();
            backward(loss_a.value);
            opt_all.step();

            // Step B: combined loss on a fresh labeled batch + unlabeled batch
            auto idx_b = labeled_b.next(n);
            std::vector<std::size_t> by_b;
            for (std::size_t i : idx_b) by_b.push_back(ys[i]);
            Tensor bx_b = stack_batch(xs, idx_b, shp);
            Tensor bu = stack_batch(unlabeled_x, unlabeled.next(n), shp);
            LossValue loss_b = combined_loss(model, bx_b, by_b, bu, margin);
            detail::check_finite_loss(loss_b.value.item(), "finetune/stepB", epoch, n_iter);
            opt_all.zero_grads();
            backward(loss_b.value);
            opt_b.step();

            sup_sum += loss_a.value.item();
            unsup_sum += loss_b.breakdown.at("unsup");
            disc_lab += detail::mean_batch_discrepancy(model, bx_a);
            disc_ul += loss_b.breakdown.at("discrepancy_mean");
            ++n_iter;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.sup_loss = sup_sum / (double)n_iter;
        rec.unsup_loss = unsup_sum / (double)n_iter;
        rec.disc_labeled = disc_lab / (double)n_iter;
        rec.disc_unlabeled = disc_ul / (double)n_iter;
        rec.val_metric = validate();
        rec.acc_head1 = detail::train_accuracy(model, train, 1);
        rec.acc_head2 = detail::train_accuracy(model, train, 2);
        log.epochs.push_back(rec);

        const bool improved =
            higher_better ? rec.val_metric > best_val : rec.val_metric < best_val;
        if (improved) {
            best_val = rec.val_metric;
            best_epoch = epoch;
            best_params = model.snapshot();
        }
    }

    model.restore(best_params);
    log.best_epoch = best_epoch;
    log.best_val_metric = best_val;
    return log;
}

}  // namespace mcd
