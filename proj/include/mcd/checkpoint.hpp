#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcd/model.hpp"

namespace mcd {

// Checkpoint file layout: u32 LE header length, JSON header, then per tensor
// (in header order) a u64 LE element count followed by raw little-endian
// float64 values. Human-debuggable header, bit-exact payload.
inline constexpr int kCheckpointVersion = 1;

enum class TrainPhase { Pretrained, Finetuned };

inline std::string phase_name(TrainPhase p) {
    return p == TrainPhase::Pretrained ? "pretrained" : "finetuned";
}

namespace detail {

inline nlohmann::json config_to_json(const TwoHeadConfig& cfg) {
    nlohmann::json j;
    j["input"] = cfg.input_kind == InputKind::Vector ? "vector" : "image";
    if (cfg.input_kind == InputKind::Vector) {
        j["input_dim"] = cfg.input_dim;
    } else {
        j["channels"] = cfg.channels;
        j["height"] = cfg.height;
        j["width"] = cfg.width;
    }
    j["num_classes"] = cfg.num_classes;
    j["hidden"] = cfg.hidden;
    j["seed_extractor"] = cfg.seed_extractor;
    j["seed_head1"] = cfg.seed_head1;
    j["seed_head2"] = cfg.seed_head2;
    return j;
}

inline TwoHeadConfig config_from_json(const nlohmann::json& j) {
    TwoHeadConfig cfg;
    cfg.input_kind = j.at("input") == "image" ? InputKind::Image : InputKind::Vector;
    if (cfg.input_kind == InputKind::Vector) {
        cfg.input_dim = j.at("input_dim");
    } else {
        cfg.channels = j.at("channels");
        cfg.height = j.at("height");
        cfg.width = j.at("width");
    }
    cfg.num_classes = j.at("num_classes");
    cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    cfg.seed_extractor = j.at("seed_extractor");
    cfg.seed_head1 = j.at("seed_head1");
    cfg.seed_head2 = j.at("seed_head2");
    return cfg;
}

inline std::vector<std::pair<std::string, Tensor>> named_params(const TwoHeadModel& m) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < m.extractor_weights.size(); ++i) {
        out.emplace_back("extractor." + std::to_string(i) + ".weight", m.extractor_weights[i]);
        out.emplace_back("extractor." + std::to_string(i) + ".bias", m.extractor_biases[i]);
    }
    out.emplace_back("head1.weight", m.head1_weight);
    out.emplace_back("head1.bias", m.head1_bias);
    out.emplace_back("head2.weight", m.head2_weight);
    out.emplace_back("head2.bias", m.head2_bias);
    return out;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TwoHeadModel& model,
                            TrainPhase phase, std::uint64_t run_seed) {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["phase"] = phase_name(phase);
    header["run_seed"] = run_seed;
    header["model"] = detail::config_to_json(model.cfg);
    auto params = detail::named_params(model);
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : params) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        tensors.push_back(e);
    }
    header["tensors"] = tensors;

    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for write");
    const std::uint32_t hlen = (std::uint32_t)hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hs.data(), hs.size());
    for (const auto& [name, t] : params) {
        const std::uint64_t count = t.size();
        out.write(reinterpret_cast<const char*>(&count), 8);
        out.write(reinterpret_cast<const char*>(t.values().data()), count * sizeof(double));
    }
    if (!out) throw DataError(path + ": write failed");
}

struct LoadedCheckpoint {
    TwoHeadModel model;
    TrainPhase phase = TrainPhase::Pretrained;
    std::uint64_t run_seed = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    std::uint32_t hlen = 0;
    if (!in.read(reinterpret_cast<char*>(&hlen), 4))
        throw FormatError(path + ": truncated header length");
    std::string hs(hlen, '\0');
    if (!in.read(hs.data(), hlen)) throw FormatError(path + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad header: " + e.what());
    }
    if (header.at("format_version") != kCheckpointVersion)
        throw FormatError(path + ": unsupported format version " +
                          header.at("format_version").dump());

    LoadedCheckpoint ck;
    ck.model = init_model(detail::config_from_json(header.at("model")));
    ck.phase = header.at("phase") == "finetuned" ? TrainPhase::Finetuned : TrainPhase::Pretrained;
    ck.run_seed = header.at("run_seed");

    auto params = detail::named_params(ck.model);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size())
        throw FormatError(path + ": tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (tensors[i].at("name") != params[i].first)
            throw FormatError(path + ": unexpected tensor " + tensors[i].at("name").dump());
        std::uint64_t count = 0;
        if (!in.read(reinterpret_cast<char*>(&count), 8))
            throw FormatError(path + ": truncated payload");
        Tensor& t = params[i].second;
        if (count != t.size())
            throw FormatError(path + ": tensor " + params[i].first + " has " +
                              std::to_string(count) + " values, expected " +
                              std::to_string(t.size()));
        if (!in.read(reinterpret_cast<char*>(t.mutable_values().data()),
                     count * sizeof(double)))
            throw FormatError(path + ": truncated tensor payload");
    }
    return ck;
}

}  // namespace mcd
