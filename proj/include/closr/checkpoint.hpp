#pragma once

// Binary checkpoint:
//   "CLOSR1\n" | u32 LE header length | UTF-8 JSON header |
//   float32 LE tensors, row-major, declaration order, then centroids.

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "closr/data.hpp"
#include "closr/error.hpp"
#include "closr/losses.hpp"
#include "closr/model.hpp"

namespace closr {

inline constexpr std::string_view kCheckpointMagic = "CLOSR1\n";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    NetworkParameters params;
    LossKind mode = LossKind::clad;
    std::vector<std::string> class_names;
    FeatureScaler scaler;
    std::vector<Eigen::VectorXd> centroids;  // one per head, or empty

    [[nodiscard]] bool open_set() const { return mode == LossKind::closr; }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
    return v;
}

inline void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline nlohmann::ordered_json to_json(const FeatureScaler& s) {
    nlohmann::ordered_json j;
    j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
    j["std"] = std::vector<double>(s.std.data(), s.std.data() + s.std.size());
    j["clamp"] = s.clamp_bound;
    return j;
}

}  // namespace detail

inline nlohmann::ordered_json model_config_json(const ModelConfig& c, LossKind mode) {
    nlohmann::ordered_json j;
    j["f"] = c.f;
    j["d_model"] = c.d_model;
    j["depth"] = c.depth;
    j["f_o"] = c.f_o;
    j["n_heads"] = c.n_heads;
    j["dropout_rate"] = c.dropout_rate;
    j["seed"] = c.seed;
    j["head"] = to_string(c.head);
    j["mode"] = to_string(mode);
    return j;
}

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    validate_shapes(ck.params);
    if (ck.class_names.empty()) throw ConfigError("checkpoint: empty class vocabulary");
    if (ck.scaler.mean.size() != ck.params.config.f || ck.scaler.std.size() != ck.params.config.f)
        throw ConfigError("checkpoint: scaler size does not match model input");
    const bool has_centroids = !ck.centroids.empty();
    if (has_centroids && ck.centroids.size() != static_cast<std::size_t>(ck.params.config.n_heads))
        throw ConfigError("checkpoint: need exactly one centroid per head");

    nlohmann::ordered_json header;
    header["format_version"] = kCheckpointVersion;
    header["model_config"] = model_config_json(ck.params.config, ck.mode);
    header["class_names"] = ck.class_names;
    header["scaler"] = detail::to_json(ck.scaler);
    header["centroids_present"] = has_centroids;
    const std::string text = header.dump();

    std::string out(kCheckpointMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (const auto& t : ck.params.tensors)
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) detail::put_f32(out, t(i, j));
    for (const auto& c : ck.centroids) {
        if (c.size() != ck.params.config.f_o) throw ConfigError("checkpoint: centroid length must equal f_o");
        for (Eigen::Index k = 0; k < c.size(); ++k) detail::put_f32(out, c(k));
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    const std::size_t magic = kCheckpointMagic.size();
    if (bytes.size() < magic + 4 || bytes.compare(0, magic, kCheckpointMagic) != 0)
        throw DataError("checkpoint: bad magic bytes");
    const std::uint32_t header_len = detail::get_u32(bytes, magic);
    std::size_t pos = magic + 4;
    if (bytes.size() < pos + header_len) throw DataError("checkpoint: truncated header");
    Checkpoint ck;
    try {
        const auto header = nlohmann::json::parse(bytes.substr(pos, header_len));
        pos += header_len;
        if (header.at("format_version").get<int>() != kCheckpointVersion)
            throw DataError("checkpoint: unsupported format version");
        const auto& mc = header.at("model_config");
        ModelConfig cfg;
        cfg.f = mc.at("f").get<int>();
        cfg.d_model = mc.at("d_model").get<int>();
        cfg.depth = mc.at("depth").get<int>();
        cfg.f_o = mc.at("f_o").get<int>();
        cfg.n_heads = mc.at("n_heads").get<int>();
        cfg.dropout_rate = mc.at("dropout_rate").get<double>();
        cfg.seed = mc.at("seed").get<std::uint64_t>();
        cfg.head = head_kind_from_string(mc.at("head").get<std::string>());
        cfg.validate();
        ck.mode = loss_kind_from_string(mc.at("mode").get<std::string>());
        ck.class_names = header.at("class_names").get<std::vector<std::string>>();
        const auto& sc = header.at("scaler");
        const auto mean = sc.at("mean").get<std::vector<double>>();
        const auto sd = sc.at("std").get<std::vector<double>>();
        if (mean.size() != static_cast<std::size_t>(cfg.f) || sd.size() != mean.size())
            throw DataError("checkpoint: scaler size mismatch");
        ck.scaler.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        ck.scaler.std = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
        ck.scaler.clamp_bound = sc.at("clamp").get<double>();
        const bool has_centroids = header.at("centroids_present").get<bool>();

        ck.params.config = cfg;
        const auto read_f32 = [&]() {
            if (bytes.size() < pos + 4) throw DataError("checkpoint: truncated tensor data");
            const float v = std::bit_cast<float>(detail::get_u32(bytes, pos));
            pos += 4;
            return static_cast<double>(v);
        };
        for (std::size_t layer = 0; layer < cfg.num_layers(); ++layer) {
            const auto [in, out] = detail::layer_shape(cfg, layer);
            Matrix w(in, out);
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = read_f32();
            Matrix b(1, out);
            for (Eigen::Index j = 0; j < b.cols(); ++j) b(0, j) = read_f32();
            ck.params.tensors.push_back(std::move(w));
            ck.params.tensors.push_back(std::move(b));
        }
        if (has_centroids) {
            for (int c = 0; c < cfg.n_heads; ++c) {
                Eigen::VectorXd mu(cfg.f_o);
                for (Eigen::Index k = 0; k < mu.size(); ++k) mu(k) = read_f32();
                ck.centroids.push_back(std::move(mu));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed header: ") + e.what());
    }
    if (pos != bytes.size()) throw DataError("checkpoint: trailing bytes after tensor data");
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const std::string bytes = serialize_checkpoint(ck);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

/// Rounds every parameter to float32 precision, matching what a
/// save/load round trip produces.
inline void round_to_float32(NetworkParameters& p) {
    for (auto& t : p.tensors) t = t.cast<float>().cast<double>();
}

}  // namespace closr
