// mcd-ood: two-head discrepancy OOD detection experiments.
//
//   mcd-ood pretrain --config cfg.json [--out dir] [--seed N]
//   mcd-ood finetune --config cfg.json --ckpt pretrained.ckpt [--out dir] [--seed N]
//   mcd-ood score    --config cfg.json --ckpt model.ckpt [--out dir]
//   mcd-ood eval     --scores scores.csv [--delta 1.0] [--out dir]
//   mcd-ood ablate   --config cfg.json [--out dir] [--seed N]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mcd/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

mcd::ExperimentConfig load_config(const CommonOpts& opts) {
    mcd::ExperimentConfig cfg = mcd::load_experiment_config(opts.config_path);
    if (opts.seed) mcd::apply_seed_override(cfg, *opts.seed);
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-head classifier discrepancy OOD detection"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string ckpt_path, scores_path;
    double delta = 1.0;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config)
            cmd->add_option("--config", opts.config_path, "experiment config JSON")->required();
        cmd->add_option("--out", opts.out_dir, "output directory override");
        cmd->add_option("--seed", opts.seed, "override all seeds from one value");
    };

    auto* c_pre = app.add_subcommand("pretrain", "supervised pre-training");
    add_common(c_pre, true);
    auto* c_fin = app.add_subcommand("finetune", "discrepancy fine-tuning");
    add_common(c_fin, true);
    c_fin->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();
    auto* c_score = app.add_subcommand("score", "score the test split");
    add_common(c_score, true);
    c_score->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    auto* c_eval = app.add_subcommand("eval", "metrics from a scores CSV");
    c_eval->add_option("--scores", scores_path, "scores CSV (score,is_ood,...)")->required();
    c_eval->add_option("--delta", delta, "detection threshold");
    c_eval->add_option("--out", opts.out_dir, "output directory");
    c_eval->add_option("--config", opts.config_path, "optional config (histogram bins, delta)");
    auto* c_abl = app.add_subcommand("ablate", "run the ablation grid");
    add_common(c_abl, true);

    CLI11_PARSE(app, argc, argv);

    try {
        namespace fs = std::filesystem;
        if (c_pre->parsed()) {
            mcd::cmd_pretrain(load_config(opts));
        } else if (c_fin->parsed()) {
            mcd::cmd_finetune(load_config(opts), ckpt_path);
        } else if (c_score->parsed()) {
            mcd::ExperimentConfig cfg = load_config(opts);
            fs::create_directories(cfg.output_dir);
            mcd::cmd_score(cfg, ckpt_path, (fs::path(cfg.output_dir) / "scores.csv").string());
        } else if (c_eval->parsed()) {
            std::size_t bins = 50;
            if (!opts.config_path.empty()) {
                mcd::ExperimentConfig cfg = mcd::load_experiment_config(opts.config_path);
                bins = cfg.eval.histogram_bins;
                if (!c_eval->count("--delta")) delta = cfg.eval.delta;
            }
            const std::string dir = opts.out_dir.empty() ? "." : opts.out_dir;
            fs::create_directories(dir);
            mcd::cmd_eval(scores_path, delta, bins, (fs::path(dir) / "report.json").string(),
                          (fs::path(dir) / "histogram.csv").string());
        } else if (c_abl->parsed()) {
            mcd::ExperimentConfig cfg = load_config(opts);
            std::ifstream in(opts.config_path);
            nlohmann::json j;
            in >> j;
            fs::create_directories(cfg.output_dir);
            mcd::cmd_ablate(cfg, mcd::parse_ablation_grid(j),
                            (fs::path(cfg.output_dir) / "ablation.csv").string());
        }
    } catch (const mcd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const mcd::TrainingError& e) {
        std::cerr << "training error: " << e.what() << '\n';
        return kExitTraining;
    } catch (const mcd::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const mcd::FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
