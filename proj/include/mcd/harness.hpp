#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcd/checkpoint.hpp"
#include "mcd/data.hpp"
#include "mcd/scoring.hpp"
#include "mcd/trainer.hpp"

namespace mcd {

// splitmix64; used to derive independent sub-seeds (ablation cells, seed
// overrides) without collisions.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct DataConfig {
    std::string source = "blobs";  // blobs | csv | idx
    std::size_t num_classes = 4;
    std::size_t n_train_per_class = 500;
    double sigma = 0.5;
    std::string ood = "ring";  // ring | shifted_blobs
    double ring_radius = 6.0, ring_width = 0.5;
    double shifted_offset = 6.0, shifted_sigma = 0.5;
    std::size_t n_ul_id = 1000, n_ul_ood = 1000;
    std::optional<std::size_t> n_test_ood;  // disjoint mode: eval OOD count (default n_ul_ood)
    double val_fraction = 0.10;
    bool disjoint_test = false;
    std::optional<std::string> eval_ood;  // cross-OOD evaluation; implies disjoint test
    std::uint64_t seed = 42;
    std::string id_csv, ood_csv;             // source = csv
    std::string idx_images, idx_labels;      // source = idx
    std::vector<std::size_t> id_classes;     // idx: which labels count as ID
};

struct EvalConfig {
    double delta = 1.0;
    std::size_t histogram_bins = 50;
};

struct ExperimentConfig {
    DataConfig data;
    TwoHeadConfig model;
    TrainConfig train;
    EvalConfig eval;
    std::string output_dir = "out";
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                                const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("config: unknown key '" + it.key() + "' in section " + section);
}

template <typename T>
inline void get_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).template get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, {"data", "model", "train", "eval", "output_dir", "ablate"},
                                "(root)");
    ExperimentConfig cfg;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(
            d,
            {"source", "num_classes", "n_train_per_class", "sigma", "ood", "ring_radius",
             "ring_width", "shifted_offset", "shifted_sigma", "n_ul_id", "n_ul_ood",
             "n_test_ood", "val_fraction", "disjoint_test", "eval_ood", "seed", "id_csv", "ood_csv",
             "idx_images", "idx_labels", "id_classes"},
            "data");
        detail::get_opt(d, "source", cfg.data.source);
        detail::get_opt(d, "num_classes", cfg.data.num_classes);
        detail::get_opt(d, "n_train_per_class", cfg.data.n_train_per_class);
        detail::get_opt(d, "sigma", cfg.data.sigma);
        detail::get_opt(d, "ood", cfg.data.ood);
        detail::get_opt(d, "ring_radius", cfg.data.ring_radius);
        detail::get_opt(d, "ring_width", cfg.data.ring_width);
        detail::get_opt(d, "shifted_offset", cfg.data.shifted_offset);
        detail::get_opt(d, "shifted_sigma", cfg.data.shifted_sigma);
        detail::get_opt(d, "n_ul_id", cfg.data.n_ul_id);
        detail::get_opt(d, "n_ul_ood", cfg.data.n_ul_ood);
        if (d.contains("n_test_ood") && !d.at("n_test_ood").is_null())
            cfg.data.n_test_ood = d.at("n_test_ood").get<std::size_t>();
        detail::get_opt(d, "val_fraction", cfg.data.val_fraction);
        detail::get_opt(d, "disjoint_test", cfg.data.disjoint_test);
        if (d.contains("eval_ood") && !d.at("eval_ood").is_null())
            cfg.data.eval_ood = d.at("eval_ood").get<std::string>();
        detail::get_opt(d, "seed", cfg.data.seed);
        detail::get_opt(d, "id_csv", cfg.data.id_csv);
        detail::get_opt(d, "ood_csv", cfg.data.ood_csv);
        detail::get_opt(d, "idx_images", cfg.data.idx_images);
        detail::get_opt(d, "idx_labels", cfg.data.idx_labels);
        detail::get_opt(d, "id_classes", cfg.data.id_classes);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(m,
                                    {"input", "input_dim", "channels", "height", "width",
                                     "num_classes", "hidden", "seed_extractor", "seed_head1",
                                     "seed_head2"},
                                    "model");
        std::string input = "vector";
        detail::get_opt(m, "input", input);
        cfg.model.input_kind = input == "image" ? InputKind::Image : InputKind::Vector;
        detail::get_opt(m, "input_dim", cfg.model.input_dim);
        detail::get_opt(m, "channels", cfg.model.channels);
        detail::get_opt(m, "height", cfg.model.height);
        detail::get_opt(m, "width", cfg.model.width);
        detail::get_opt(m, "num_classes", cfg.model.num_classes);
        detail::get_opt(m, "hidden", cfg.model.hidden);
        detail::get_opt(m, "seed_extractor", cfg.model.seed_extractor);
        detail::get_opt(m, "seed_head1", cfg.model.seed_head1);
        detail::get_opt(m, "seed_head2", cfg.model.seed_head2);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown_keys(
            t,
            {"pretrain_epochs", "finetune_epochs", "lr_pretrain", "lr_finetune",
             "lr_drop_points", "lr_drop_factor", "batch_size", "margin", "seed",
             "early_stop_metric", "freeze_extractor_in_step_b"},
            "train");
        detail::get_opt(t, "pretrain_epochs", cfg.train.pretrain_epochs);
        detail::get_opt(t, "finetune_epochs", cfg.train.finetune_epochs);
        detail::get_opt(t, "lr_pretrain", cfg.train.lr_pretrain);
        detail::get_opt(t, "lr_finetune", cfg.train.lr_finetune);
        detail::get_opt(t, "lr_drop_points", cfg.train.lr_drop_points);
        detail::get_opt(t, "lr_drop_factor", cfg.train.lr_drop_factor);
        detail::get_opt(t, "batch_size", cfg.train.batch_size);
        detail::get_opt(t, "margin", cfg.train.margin);
        detail::get_opt(t, "seed", cfg.train.seed);
        if (t.contains("early_stop_metric")) {
            const std::string name = t.at("early_stop_metric");
            if (name == "auroc")
                cfg.train.early_stop_metric = EarlyStopMetric::Auroc;
            else if (name == "fpr_at_95_tpr")
                cfg.train.early_stop_metric = EarlyStopMetric::FprAt95Tpr;
            else if (name == "detection_error")
                cfg.train.early_stop_metric = EarlyStopMetric::DetectionError;
            else if (name == "aupr_in")
                cfg.train.early_stop_metric = EarlyStopMetric::AuprIn;
            else if (name == "aupr_out")
                cfg.train.early_stop_metric = EarlyStopMetric::AuprOut;
            else
                throw ConfigError("config: unknown early_stop_metric '" + name + "'");
        }
        detail::get_opt(t, "freeze_extractor_in_step_b", cfg.train.freeze_extractor_in_step_b);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::reject_unknown_keys(e, {"delta", "histogram_bins"}, "eval");
        detail::get_opt(e, "delta", cfg.eval.delta);
        detail::get_opt(e, "histogram_bins", cfg.eval.histogram_bins);
    }
    detail::get_opt(j, "output_dir", cfg.output_dir);
    cfg.train.delta = cfg.eval.delta;
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    try {
        return parse_experiment_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// Re-seed every randomized stage from one override; stage streams keep the
// sub-seeds independent.
inline void apply_seed_override(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.data.seed = mix_seed(seed, 1);
    cfg.train.seed = mix_seed(seed, 2);
    cfg.model.seed_extractor = mix_seed(seed, 3);
    cfg.model.seed_head1 = mix_seed(seed, 4);
    cfg.model.seed_head2 = mix_seed(seed, 5);
}

inline std::vector<std::array<double, 2>> blob_centers(std::size_t num_classes) {
    if (num_classes == 4) return default_blob_centers();
    std::vector<std::array<double, 2>> out;
    for (std::size_t k = 0; k < num_classes; ++k) {
        const double a = 2.0 * std::numbers::pi * (double)k / (double)num_classes;
        out.push_back({3.0 * std::cos(a), 3.0 * std::sin(a)});
    }
    return out;
}

inline std::vector<std::vector<double>> generate_ood(const DataConfig& d,
                                                     const std::string& kind, std::size_t n,
                                                     std::uint64_t seed) {
    if (kind == "ring") return gen_ring_ood(n, d.ring_radius, d.ring_width, seed);
    if (kind == "shifted_blobs")
        return gen_shifted_blob_ood(n, d.shifted_offset, d.shifted_sigma, seed);
    throw ConfigError("config: unknown OOD generator '" + kind + "'");
}

inline DatasetSplit build_split(const DataConfig& d) {
    const bool disjoint = d.disjoint_test || d.eval_ood.has_value();
    const std::size_t n_test_ood = d.n_test_ood.value_or(d.n_ul_ood);
    std::vector<LabeledSample> id_pool;
    std::vector<std::vector<double>> ood_pool;
    std::size_t n_train = 0;
    if (d.source == "blobs") {
        n_train = d.num_classes * d.n_train_per_class;
        const std::size_t per_class =
            (n_train + 2 * d.n_ul_id + d.num_classes - 1) / d.num_classes;
        id_pool = gen_gaussian_blobs(d.num_classes, per_class, blob_centers(d.num_classes),
                                     d.sigma, mix_seed(d.seed, 10));
        const std::size_t n_ood_pool =
            disjoint && !d.eval_ood ? d.n_ul_ood + n_test_ood : 2 * d.n_ul_ood;
        ood_pool = generate_ood(d, d.ood, n_ood_pool, mix_seed(d.seed, 11));
    } else if (d.source == "csv") {
        VectorCsv id = load_vector_csv(d.id_csv);
        for (std::size_t i = 0; i < id.features.size(); ++i) {
            if (!id.labels[i]) throw DataError(d.id_csv + ": unlabeled row in ID dataset");
            id_pool.push_back({id.features[i], *id.labels[i]});
        }
        VectorCsv ood = load_vector_csv(d.ood_csv);
        ood_pool = ood.features;
        n_train = id_pool.size() - d.n_ul_id * (disjoint ? 2 : 1);
    } else if (d.source == "idx") {
        auto all = load_idx_images(d.idx_images, d.idx_labels);
        std::vector<std::size_t> relabel(256, SIZE_MAX);
        for (std::size_t i = 0; i < d.id_classes.size(); ++i) relabel[d.id_classes[i]] = i;
        for (auto& s : all) {
            if (relabel[s.y] != SIZE_MAX)
                id_pool.push_back({std::move(s.x), relabel[s.y]});
            else
                ood_pool.push_back(std::move(s.x));
        }
        n_train = id_pool.size() - d.n_ul_id * (disjoint ? 2 : 1);
    } else {
        throw ConfigError("config: unknown data source '" + d.source + "'");
    }
    std::vector<std::vector<double>> test_ood;
    if (d.eval_ood) test_ood = generate_ood(d, *d.eval_ood, n_test_ood, mix_seed(d.seed, 12));
    return make_split(id_pool, ood_pool, n_train, d.n_ul_id, d.n_ul_ood, d.val_fraction,
                      disjoint, mix_seed(d.seed, 13), d.eval_ood ? &test_ood : nullptr,
                      n_test_ood);
}

namespace detail {

inline std::string metric_column(EarlyStopMetric m) {
    switch (m) {
        case EarlyStopMetric::Auroc: return "val_auroc";
        case EarlyStopMetric::FprAt95Tpr: return "val_fpr_at_95_tpr";
        case EarlyStopMetric::DetectionError: return "val_detection_error";
        case EarlyStopMetric::AuprIn: return "val_aupr_in";
        case EarlyStopMetric::AuprOut: return "val_aupr_out";
    }
    return "val_metric";
}

inline void write_train_log_csv(const std::string& path, const TrainLog& log,
                                const std::string& val_col) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot open for write");
    out << "epoch,sup_loss,unsup_loss,disc_labeled,disc_unlabeled," << val_col
        << ",acc_head1,acc_head2\n";
    out << std::setprecision(17);
    for (const auto& r : log.epochs)
        out << r.epoch << ',' << r.sup_loss << ',' << r.unsup_loss << ',' << r.disc_labeled
            << ',' << r.disc_unlabeled << ',' << r.val_metric << ',' << r.acc_head1 << ','
            << r.acc_head2 << '\n';
}

}  // namespace detail

inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["fpr_at_95_tpr"] = r.fpr_at_95_tpr;
    j["detection_error"] = r.detection_error;
    j["auroc"] = r.auroc;
    j["aupr_in"] = r.aupr_in;
    j["aupr_out"] = r.aupr_out;
    j["mean_discrepancy_id"] = r.mean_discrepancy_id;
    j["mean_discrepancy_ood"] = r.mean_discrepancy_ood;
    j["threshold_used"] = r.threshold_used;
    j["n_id"] = r.n_id;
    j["n_ood"] = r.n_ood;
    return j;
}

inline void cmd_pretrain(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    DatasetSplit split = build_split(cfg.data);
    TwoHeadModel model = init_model(cfg.model);
    TrainLog log = pretrain(model, split.train_labeled, cfg.train);
    save_checkpoint((fs::path(cfg.output_dir) / "pretrained.ckpt").string(), model,
                    TrainPhase::Pretrained, cfg.train.seed);
    detail::write_train_log_csv((fs::path(cfg.output_dir) / "pretrain_log.csv").string(), log,
                                detail::metric_column(cfg.train.early_stop_metric));
}

inline void cmd_finetune(const ExperimentConfig& cfg, const std::string& ckpt_path) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    if (ck.phase != TrainPhase::Pretrained)
        throw ConfigError(ckpt_path + ": expected a pretrained checkpoint, got phase '" +
                          phase_name(ck.phase) + "'");
    DatasetSplit split = build_split(cfg.data);

    const double pre_acc1 = id_accuracy(ck.model, split.test, 1);
    const double pre_acc2 = id_accuracy(ck.model, split.test, 2);

    TrainLog log = finetune(ck.model, split.train_labeled, split.unlabeled_x, split.validation,
                            cfg.train, &split.unlabeled_truth);
    save_checkpoint((fs::path(cfg.output_dir) / "finetuned.ckpt").string(), ck.model,
                    TrainPhase::Finetuned, cfg.train.seed);
    detail::write_train_log_csv((fs::path(cfg.output_dir) / "finetune_log.csv").string(), log,
                                detail::metric_column(cfg.train.early_stop_metric));

    // the classification-accuracy cost of fine-tuning, with the pre-trained
    // classifier retained as the fallback for ID classification
    const double post_acc1 = id_accuracy(ck.model, split.test, 1);
    const double post_acc2 = id_accuracy(ck.model, split.test, 2);
    nlohmann::json acc;
    acc["format_version"] = 1;
    acc["pretrained_id_accuracy_head1"] = pre_acc1;
    acc["pretrained_id_accuracy_head2"] = pre_acc2;
    acc["finetuned_id_accuracy_head1"] = post_acc1;
    acc["finetuned_id_accuracy_head2"] = post_acc2;
    acc["accuracy_delta_head1"] = pre_acc1 - post_acc1;
    acc["accuracy_delta_head2"] = pre_acc2 - post_acc2;
    std::ofstream(fs::path(cfg.output_dir) / "accuracy_report.json")
        << acc.dump(2) << '\n';
}

inline void cmd_score(const ExperimentConfig& cfg, const std::string& ckpt_path,
                      const std::string& out_csv) {
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    DatasetSplit split = build_split(cfg.data);
    std::vector<std::vector<double>> xs;
    for (const auto& s : split.test) xs.push_back(s.x);
    auto scores = score_samples(ck.model, xs);
    std::ofstream out(out_csv);
    if (!out) throw DataError(out_csv + ": cannot open for write");
    out << "score,is_ood,max_p1,max_p2,discrepancy\n" << std::setprecision(17);
    for (std::size_t i = 0; i < scores.size(); ++i)
        out << scores[i].l1 << ',' << (split.test[i].is_ood ? 1 : 0) << ',' << scores[i].max_p1
            << ',' << scores[i].max_p2 << ',' << scores[i].discrepancy << '\n';
}

struct ScoresCsv {
    std::vector<ScoredSample> samples;
    std::vector<double> discrepancy;  // empty when the column is absent
};

inline ScoresCsv load_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    std::vector<std::string> cols;
    {
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) cols.push_back(cell);
    }
    auto col_of = [&](const std::string& name) -> long {
        auto it = std::find(cols.begin(), cols.end(), name);
        return it == cols.end() ? -1 : (long)(it - cols.begin());
    };
    const long c_score = col_of("score"), c_ood = col_of("is_ood"), c_disc = col_of("discrepancy");
    if (c_score < 0 || c_ood < 0)
        throw FormatError(path + ": header must contain score and is_ood columns");
    ScoresCsv out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        ScoredSample s;
        s.score = std::stod(cells.at(c_score));
        s.is_ood = std::stoi(cells.at(c_ood)) != 0;
        out.samples.push_back(s);
        if (c_disc >= 0) out.discrepancy.push_back(std::stod(cells.at(c_disc)));
    }
    return out;
}

inline void cmd_eval(const std::string& scores_csv, double delta, std::size_t histogram_bins,
                     const std::string& out_json, const std::string& out_hist_csv) {
    ScoresCsv data = load_scores_csv(scores_csv);
    MetricsReport r = compute_metrics(data.samples, delta);
    if (!data.discrepancy.empty()) {
        double id = 0.0, ood = 0.0;
        for (std::size_t i = 0; i < data.samples.size(); ++i)
            (data.samples[i].is_ood ? ood : id) += data.discrepancy[i];
        r.mean_discrepancy_id = id / (double)r.n_id;
        r.mean_discrepancy_ood = ood / (double)r.n_ood;
    }

    nlohmann::json j = report_to_json(r);
    std::size_t correct = 0;
    for (const auto& s : data.samples)
        if (classify_ood(s.score, delta) == s.is_ood) ++correct;
    j["threshold_accuracy"] = (double)correct / (double)data.samples.size();
    std::ofstream(out_json) << j.dump(2) << '\n';

    // L1 scores live in [0,2]; fixed-range bins keep histograms comparable
    std::ofstream hist(out_hist_csv);
    if (!hist) throw DataError(out_hist_csv + ": cannot open for write");
    hist << "bin_lo,bin_hi,count_id,count_ood\n" << std::setprecision(17);
    std::vector<std::size_t> id_counts(histogram_bins, 0), ood_counts(histogram_bins, 0);
    for (const auto& s : data.samples) {
        std::size_t b = (std::size_t)(s.score / 2.0 * (double)histogram_bins);
        if (b >= histogram_bins) b = histogram_bins - 1;
        (s.is_ood ? ood_counts : id_counts)[b]++;
    }
    for (std::size_t b = 0; b < histogram_bins; ++b)
        hist << 2.0 * (double)b / (double)histogram_bins << ','
             << 2.0 * (double)(b + 1) / (double)histogram_bins << ',' << id_counts[b] << ','
             << ood_counts[b] << '\n';
}

struct PipelineResult {
    TwoHeadModel pretrained;  // the retained "original classifier"
    TwoHeadModel finetuned;
    TrainLog pretrain_log;
    TrainLog finetune_log;
    MetricsReport report;
    MetricsReport baseline_report;  // max-softmax on the pre-trained model
    DatasetSplit split;
};

// One full experiment: split -> pretrain -> finetune -> evaluate. Shared by
// the CLI's ablate command and the end-to-end tests.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg) {
    PipelineResult res;
    res.split = build_split(cfg.data);
    res.finetuned = init_model(cfg.model);
    res.pretrain_log = pretrain(res.finetuned, res.split.train_labeled, cfg.train);
    res.pretrained = init_model(cfg.model);
    res.pretrained.restore(res.finetuned.snapshot());
    res.finetune_log =
        finetune(res.finetuned, res.split.train_labeled, res.split.unlabeled_x,
                 res.split.validation, cfg.train, &res.split.unlabeled_truth);
    res.report = evaluate(res.finetuned, res.split.test, cfg.eval.delta);
    res.baseline_report =
        compute_metrics(max_softmax_baseline(res.pretrained, res.split.test), cfg.eval.delta);
    return res;
}

struct AblationCell {
    std::size_t n_ul_id = 0, n_ul_ood = 0;
    std::string ood = "ring";
    std::optional<std::string> eval_ood;
};

inline std::vector<AblationCell> parse_ablation_grid(const nlohmann::json& j) {
    if (!j.contains("ablate")) throw ConfigError("config: missing 'ablate' section");
    const auto& a = j.at("ablate");
    detail::reject_unknown_keys(a, {"n_ul_id", "n_ul_ood", "ood", "eval_ood"}, "ablate");
    std::vector<std::size_t> ids = a.value("n_ul_id", std::vector<std::size_t>{1000});
    std::vector<std::size_t> oods = a.value("n_ul_ood", std::vector<std::size_t>{1000});
    std::vector<std::string> gens = a.value("ood", std::vector<std::string>{"ring"});
    std::vector<nlohmann::json> evals;
    if (a.contains("eval_ood"))
        evals = a.at("eval_ood").get<std::vector<nlohmann::json>>();
    else
        evals = {nlohmann::json()};
    std::vector<AblationCell> cells;
    for (auto id : ids)
        for (auto ood : oods)
            for (const auto& g : gens)
                for (const auto& e : evals) {
                    AblationCell c{id, ood, g, std::nullopt};
                    if (!e.is_null()) c.eval_ood = e.get<std::string>();
                    cells.push_back(c);
                }
    if (cells.empty()) throw ConfigError("config: empty ablation grid");
    return cells;
}

// Every ablation cell evaluates on the same held-out protocol: a disjoint
// test set whose OOD count is pinned to the base config's n_ul_ood, so cells
// that vary (or zero out) the unlabeled OOD mix stay comparable and evaluable.
inline ExperimentConfig ablation_cell_config(const ExperimentConfig& base,
                                             const AblationCell& cell, std::size_t index) {
    ExperimentConfig cfg = base;
    cfg.data.n_ul_id = cell.n_ul_id;
    cfg.data.n_ul_ood = cell.n_ul_ood;
    cfg.data.ood = cell.ood;
    cfg.data.eval_ood = cell.eval_ood;
    cfg.data.disjoint_test = true;
    cfg.data.n_test_ood = base.data.n_test_ood.value_or(base.data.n_ul_ood);
    // fresh seed-derived sub-seeds per cell
    apply_seed_override(cfg, mix_seed(base.train.seed, 100 + index));
    return cfg;
}

inline void cmd_ablate(const ExperimentConfig& base, const std::vector<AblationCell>& cells,
                       const std::string& out_csv) {
    std::ofstream out(out_csv);
    if (!out) throw DataError(out_csv + ": cannot open for write");
    out << "cell,n_ul_id,n_ul_ood,ood,eval_ood,detection_error,auroc,fpr_at_95_tpr,"
           "mean_discrepancy_id,mean_discrepancy_ood\n"
        << std::setprecision(17);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        PipelineResult res = run_pipeline(ablation_cell_config(base, cells[i], i));
        out << i << ',' << cells[i].n_ul_id << ',' << cells[i].n_ul_ood << ',' << cells[i].ood
            << ',' << (cells[i].eval_ood ? *cells[i].eval_ood : "") << ','
            << res.report.detection_error << ',' << res.report.auroc << ','
            << res.report.fpr_at_95_tpr << ',' << res.report.mean_discrepancy_id << ','
            << res.report.mean_discrepancy_ood << '\n';
    }
}

}  // namespace mcd
