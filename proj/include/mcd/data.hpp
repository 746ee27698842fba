#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include "mcd/error.hpp"
#include "mcd/tensor.hpp"

namespace mcd {

struct LabeledSample {
    std::vector<double> x;
    std::size_t y = 0;
};

// Evaluation-side sample: ground truth stays labeled. label is the class
// index for ID samples and unused for OOD.
struct EvalSample {
    std::vector<double> x;
    bool is_ood = false;
    std::size_t label = 0;
};

// OOD truth of the unlabeled pool. Locked while the trainer runs; reading
// it then is a contract violation.
class HiddenTruth {
public:
    HiddenTruth() = default;
    explicit HiddenTruth(std::vector<bool> is_ood) : is_ood_(std::move(is_ood)) {}

    void lock() const { locked_ = true; }
    void unlock() const { locked_ = false; }

    const std::vector<bool>& reveal() const {
        if (locked_)
            throw ContractError("hidden truth read while training is in progress");
        return is_ood_;
    }

private:
    std::vector<bool> is_ood_;
    mutable bool locked_ = false;
};

struct TruthLockGuard {
    const HiddenTruth& t;
    explicit TruthLockGuard(const HiddenTruth& truth) : t(truth) { t.lock(); }
    ~TruthLockGuard() { t.unlock(); }
};

struct SplitManifest {
    std::uint64_t seed = 0;
    std::size_t n_train = 0, n_ul_id = 0, n_ul_ood = 0, n_validation = 0, n_test = 0;
    double val_fraction = 0.10;
    bool disjoint_test = false;
    std::string generator;
};

struct DatasetSplit {
    std::vector<LabeledSample> train_labeled;
    std::vector<std::vector<double>> unlabeled_x;  // all the trainer may see
    HiddenTruth unlabeled_truth;
    std::vector<EvalSample> validation;
    std::vector<EvalSample> test;
    SplitManifest manifest;
};

inline std::vector<LabeledSample> gen_gaussian_blobs(std::size_t num_classes,
                                                     std::size_t n_per_class,
                                                     const std::vector<std::array<double, 2>>& centers,
                                                     double sigma, std::uint64_t seed) {
    if (num_classes < 2) throw ConfigError("gen_gaussian_blobs: need at least 2 classes");
    if (centers.size() != num_classes)
        throw ConfigError("gen_gaussian_blobs: centers count != num_classes");
    if (sigma < 0.0) throw ConfigError("gen_gaussian_blobs: sigma must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<LabeledSample> out;
    out.reserve(num_classes * n_per_class);
    for (std::size_t k = 0; k < num_classes; ++k)
        for (std::size_t i = 0; i < n_per_class; ++i)
            out.push_back({{centers[k][0] + sigma * noise(rng),
                            centers[k][1] + sigma * noise(rng)},
                           k});
    return out;
}

inline std::vector<std::array<double, 2>> default_blob_centers() {
    return {{{2.0, 2.0}, {-2.0, 2.0}, {-2.0, -2.0}, {2.0, -2.0}}};
}

// Annulus around the origin, outside the blob support.
inline std::vector<std::vector<double>> gen_ring_ood(std::size_t n, double radius,
                                                     double width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> rad(radius - width, radius + width);
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = angle(rng), r = rad(rng);
        out.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return out;
}

// Gaussian clusters on the axes at the given offset; a second OOD family
// with different geometry than the ring.
inline std::vector<std::vector<double>> gen_shifted_blob_ood(std::size_t n, double offset,
                                                             double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::array<std::array<double, 2>, 4> centers = {
        {{offset, 0.0}, {0.0, offset}, {-offset, 0.0}, {0.0, -offset}}};
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = centers[i % 4];
        out.push_back({c[0] + sigma * noise(rng), c[1] + sigma * noise(rng)});
    }
    return out;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(path + ": truncated at byte " + std::to_string(offset));
    return ((std::uint32_t)b[0] << 24) | ((std::uint32_t)b[1] << 16) | ((std::uint32_t)b[2] << 8) |
           (std::uint32_t)b[3];
}

}  // namespace detail

// IDX (MNIST-style) loader: big-endian, magic 0x803 for images and 0x801
// for labels. Pixels scaled to [0,1], shape 1 x h x w.
inline std::vector<LabeledSample> load_idx_images(const std::string& images_path,
                                                  const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw FormatError(images_path + ": cannot open");
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw FormatError(labels_path + ": cannot open");

    const std::uint32_t img_magic = detail::read_be32(imgs, images_path, 0);
    if (img_magic != 0x00000803)
        throw FormatError(images_path + ": bad magic at byte 0 (expected 0x00000803)");
    const std::uint32_t n_images = detail::read_be32(imgs, images_path, 4);
    const std::uint32_t h = detail::read_be32(imgs, images_path, 8);
    const std::uint32_t w = detail::read_be32(imgs, images_path, 12);

    const std::uint32_t lab_magic = detail::read_be32(labs, labels_path, 0);
    if (lab_magic != 0x00000801)
        throw FormatError(labels_path + ": bad magic at byte 0 (expected 0x00000801)");
    const std::uint32_t n_labels = detail::read_be32(labs, labels_path, 4);
    if (n_images != n_labels)
        throw FormatError(images_path + ": image count " + std::to_string(n_images) +
                          " != label count " + std::to_string(n_labels));

    std::vector<LabeledSample> out;
    out.reserve(n_images);
    std::vector<unsigned char> buf(h * w);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(buf.data()), buf.size()))
            throw FormatError(images_path + ": truncated at byte " +
                              std::to_string(16 + (std::size_t)i * h * w));
        char lab;
        if (!labs.read(&lab, 1))
            throw FormatError(labels_path + ": truncated at byte " + std::to_string(8 + i));
        LabeledSample s;
        s.x.resize(h * w);
        for (std::size_t j = 0; j < buf.size(); ++j) s.x[j] = buf[j] / 255.0;
        s.y = (unsigned char)lab;
        out.push_back(std::move(s));
    }
    return out;
}

// The split protocol: X_in = ID train pool; an evaluation pool of
// n_ul_id ID + n_ul_ood OOD samples is shuffled, val_fraction of it is held
// out labeled for validation, the remainder is the test set. By default the
// test samples double as X_ul (transductive); with disjoint_test, X_ul gets
// its own draw and the test set stays unseen by training.
// Default (transductive) protocol: the evaluation pool of n_ul_id + n_ul_ood
// samples is split into validation and test, and X_ul is exactly the test set.
// With disjoint_test, X_ul keeps the full requested n_ul_id + n_ul_ood mix and
// validation/test come from a fresh draw of n_ul_id ID + n_test_ood OOD
// samples (n_test_ood defaults to n_ul_ood; it can differ so the evaluation
// mix stays fixed while the unlabeled mix is varied). test_ood_pool, when
// given, supplies the fresh draw's OOD from a different generator.
inline DatasetSplit make_split(const std::vector<LabeledSample>& id_pool,
                               const std::vector<std::vector<double>>& ood_pool,
                               std::size_t n_train, std::size_t n_ul_id, std::size_t n_ul_ood,
                               double val_fraction, bool disjoint_test, std::uint64_t seed,
                               const std::vector<std::vector<double>>* test_ood_pool = nullptr,
                               std::size_t n_test_ood = SIZE_MAX) {
    if (n_test_ood == SIZE_MAX) n_test_ood = n_ul_ood;
    const std::size_t id_needed = n_train + n_ul_id * (disjoint_test ? 2 : 1);
    if (id_pool.size() < id_needed)
        throw DataError("make_split: need " + std::to_string(id_needed) + " ID samples, have " +
                        std::to_string(id_pool.size()));
    const std::size_t ood_needed =
        n_ul_ood + (disjoint_test && !test_ood_pool ? n_test_ood : 0);
    if (ood_pool.size() < ood_needed)
        throw DataError("make_split: need " + std::to_string(ood_needed) + " OOD samples, have " +
                        std::to_string(ood_pool.size()));
    if (test_ood_pool && test_ood_pool->size() < n_test_ood)
        throw DataError("make_split: test OOD pool too small");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> id_idx(id_pool.size());
    std::iota(id_idx.begin(), id_idx.end(), 0);
    std::shuffle(id_idx.begin(), id_idx.end(), rng);
    std::vector<std::size_t> ood_idx(ood_pool.size());
    std::iota(ood_idx.begin(), ood_idx.end(), 0);
    std::shuffle(ood_idx.begin(), ood_idx.end(), rng);

    DatasetSplit split;
    std::size_t ip = 0, op = 0;
    for (std::size_t i = 0; i < n_train; ++i) split.train_labeled.push_back(id_pool[id_idx[ip++]]);

    // unlabeled pool, shuffled so hidden truth order carries no signal
    std::vector<EvalSample> pool;
    for (std::size_t i = 0; i < n_ul_id; ++i) {
        const auto& s = id_pool[id_idx[ip++]];
        pool.push_back({s.x, false, s.y});
    }
    for (std::size_t i = 0; i < n_ul_ood; ++i) pool.push_back({ood_pool[ood_idx[op++]], true, 0});
    std::shuffle(pool.begin(), pool.end(), rng);

    std::vector<bool> truth;
    if (!disjoint_test) {
        const std::size_t n_val = (std::size_t)std::llround(val_fraction * (double)pool.size());
        split.validation.assign(pool.begin(), pool.begin() + n_val);
        split.test.assign(pool.begin() + n_val, pool.end());
        for (const auto& s : split.test) {
            split.unlabeled_x.push_back(s.x);
            truth.push_back(s.is_ood);
        }
    } else {
        for (const auto& s : pool) {
            split.unlabeled_x.push_back(s.x);
            truth.push_back(s.is_ood);
        }
        std::vector<EvalSample> fresh;
        for (std::size_t i = 0; i < n_ul_id; ++i) {
            const auto& s = id_pool[id_idx[ip++]];
            fresh.push_back({s.x, false, s.y});
        }
        for (std::size_t i = 0; i < n_test_ood; ++i) {
            if (test_ood_pool)
                fresh.push_back({(*test_ood_pool)[i], true, 0});
            else
                fresh.push_back({ood_pool[ood_idx[op++]], true, 0});
        }
        std::shuffle(fresh.begin(), fresh.end(), rng);
        const std::size_t n_val = (std::size_t)std::llround(val_fraction * (double)fresh.size());
        split.validation.assign(fresh.begin(), fresh.begin() + n_val);
        split.test.assign(fresh.begin() + n_val, fresh.end());
    }
    split.unlabeled_truth = HiddenTruth(std::move(truth));

    split.manifest.seed = seed;
    split.manifest.n_train = split.train_labeled.size();
    split.manifest.n_ul_id = n_ul_id;
    split.manifest.n_ul_ood = n_ul_ood;
    split.manifest.n_validation = split.validation.size();
    split.manifest.n_test = split.test.size();
    split.manifest.val_fraction = val_fraction;
    split.manifest.disjoint_test = disjoint_test;
    return split;
}

// Vector dataset CSV: header x0,...,x{d-1},label; the label cell is empty
// for unlabeled rows.
struct VectorCsv {
    std::vector<std::vector<double>> features;
    std::vector<std::optional<std::size_t>> labels;
};

inline VectorCsv load_vector_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    std::size_t d = 0;
    {
        std::stringstream hs(line);
        std::string cell;
        std::vector<std::string> cols;
        while (std::getline(hs, cell, ',')) cols.push_back(cell);
        if (cols.size() < 2 || cols.back() != "label")
            throw FormatError(path + ": header must be x0,...,label");
        d = cols.size() - 1;
    }
    VectorCsv out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<double> x;
        for (std::size_t i = 0; i < d; ++i) {
            if (!std::getline(ls, cell, ','))
                throw FormatError(path + ": row " + std::to_string(row) + " has too few columns");
            x.push_back(std::stod(cell));
        }
        std::optional<std::size_t> label;
        if (std::getline(ls, cell, ',') && !cell.empty()) label = (std::size_t)std::stoul(cell);
        out.features.push_back(std::move(x));
        out.labels.push_back(label);
        ++row;
    }
    return out;
}

inline void save_vector_csv(const std::string& path, const VectorCsv& data) {
    std::ofstream out(path);
    if (!out) throw FormatError(path + ": cannot open for write");
    const std::size_t d = data.features.empty() ? 0 : data.features[0].size();
    for (std::size_t i = 0; i < d; ++i) out << "x" << i << ",";
    out << "label\n";
    out.precision(17);
    for (std::size_t r = 0; r < data.features.size(); ++r) {
        for (double v : data.features[r]) out << v << ",";
        if (data.labels[r]) out << *data.labels[r];
        out << "\n";
    }
}

// Batch assembly: stack flat feature rows into [n, d] (or [n,c,h,w] given
// an explicit sample shape).
inline Tensor stack_batch(const std::vector<std::vector<double>>& rows,
                          const std::vector<std::size_t>& idx, const Shape& sample_shape) {
    const std::size_t d = shape_numel(sample_shape);
    std::vector<double> flat;
    flat.reserve(idx.size() * d);
    for (std::size_t i : idx) {
        if (rows[i].size() != d)
            throw DimensionError("stack_batch: sample size " + std::to_string(rows[i].size()) +
                                 " != expected " + std::to_string(d));
        flat.insert(flat.end(), rows[i].begin(), rows[i].end());
    }
    Shape s{idx.size()};
    s.insert(s.end(), sample_shape.begin(), sample_shape.end());
    return Tensor::from(std::move(s), std::move(flat));
}

}  // namespace mcd
