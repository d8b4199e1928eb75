#pragma once

// MLP encoder with class-wise linear projection heads onto the unit
// hypersphere, and exact reverse-mode gradients.
//
//   x -> Linear(f, d_model) -> [Linear(d_model, d_model) -> ReLU -> Dropout] x depth
//     -> head_c: Linear(d_model, f_o) -> L2 normalize

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "closr/data.hpp"
#include "closr/error.hpp"

namespace closr {

enum class HeadKind {
    sphere,  // unit-norm embedding
    linear,  // raw output, used for logits
};

inline std::string to_string(HeadKind k) { return k == HeadKind::sphere ? "sphere" : "linear"; }

inline HeadKind head_kind_from_string(const std::string& s) {
    if (s == "sphere") return HeadKind::sphere;
    if (s == "linear") return HeadKind::linear;
    throw ConfigError("unknown head kind '" + s + "'");
}

struct ModelConfig {
    int f = 1;
    int d_model = 64;
    int depth = 3;
    int f_o = 16;
    int n_heads = 1;
    double dropout_rate = 0.0;
    std::uint64_t seed = 0;
    HeadKind head = HeadKind::sphere;

    void validate() const {
        if (f < 1 || d_model < 1 || depth < 1 || f_o < 1 || n_heads < 1)
            throw ConfigError("model dimensions f, d_model, depth, f_o, n_heads must all be >= 1");
        if (head == HeadKind::sphere && f_o < 2)
            throw ConfigError("f_o must be >= 2 for hypersphere embeddings");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0,1)");
    }

    [[nodiscard]] std::size_t num_layers() const { return static_cast<std::size_t>(1 + depth + n_heads); }
};

/// Trainable state. Tensors are stored in declaration order as
/// (weight, bias) pairs: input, blocks 0..depth-1, heads 0..n_heads-1.
/// Biases are 1 x out matrices.
struct NetworkParameters {
    ModelConfig config;
    std::vector<Matrix> tensors;

    [[nodiscard]] static std::size_t input_layer() { return 0; }
    [[nodiscard]] static std::size_t block_layer(std::size_t k) { return 1 + k; }
    [[nodiscard]] std::size_t head_layer(std::size_t c) const { return 1 + static_cast<std::size_t>(config.depth) + c; }

    Matrix& weight(std::size_t layer) { return tensors[2 * layer]; }
    Matrix& bias(std::size_t layer) { return tensors[2 * layer + 1]; }
    [[nodiscard]] const Matrix& weight(std::size_t layer) const { return tensors[2 * layer]; }
    [[nodiscard]] const Matrix& bias(std::size_t layer) const { return tensors[2 * layer + 1]; }

    [[nodiscard]] static bool is_bias(std::size_t tensor_index) { return tensor_index % 2 == 1; }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
        return n;
    }

    [[nodiscard]] bool all_finite() const {
        for (const auto& t : tensors)
            if (!t.allFinite()) return false;
        return true;
    }

    /// Same shapes, all zeros.
    [[nodiscard]] NetworkParameters zeros_like() const {
        NetworkParameters z;
        z.config = config;
        z.tensors.reserve(tensors.size());
        for (const auto& t : tensors) z.tensors.push_back(Matrix::Zero(t.rows(), t.cols()));
        return z;
    }
};

namespace detail {

inline std::pair<int, int> layer_shape(const ModelConfig& cfg, std::size_t layer) {
    if (layer == 0) return {cfg.f, cfg.d_model};
    if (layer <= static_cast<std::size_t>(cfg.depth)) return {cfg.d_model, cfg.d_model};
    return {cfg.d_model, cfg.f_o};
}

}  // namespace detail

/// Glorot-uniform weights, zero biases.
inline NetworkParameters init_network(const ModelConfig& cfg) {
    cfg.validate();
    NetworkParameters p;
    p.config = cfg;
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t layer = 0; layer < cfg.num_layers(); ++layer) {
        const auto [fan_in, fan_out] = detail::layer_shape(cfg, layer);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix w(fan_in, fan_out);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
        p.tensors.push_back(std::move(w));
        p.tensors.push_back(Matrix::Zero(1, fan_out));
    }
    return p;
}

/// Checks tensor count and shapes against the stored config.
inline void validate_shapes(const NetworkParameters& p) {
    p.config.validate();
    if (p.tensors.size() != 2 * p.config.num_layers()) throw ConfigError("parameter tensor count mismatch");
    for (std::size_t layer = 0; layer < p.config.num_layers(); ++layer) {
        const auto [in, out] = detail::layer_shape(p.config, layer);
        if (p.weight(layer).rows() != in || p.weight(layer).cols() != out || p.bias(layer).rows() != 1 ||
            p.bias(layer).cols() != out)
            throw ConfigError("parameter tensor shape mismatch at layer " + std::to_string(layer));
    }
}

/// Activations retained by forward() for backward().
struct ForwardTape {
    Matrix input;
    std::vector<Matrix> hidden;    // hidden[0]: input projection; hidden[k]: block k output
    std::vector<Matrix> pre_relu;  // per block
    std::vector<Matrix> masks;     // per block; empty when dropout inactive
    std::vector<Eigen::VectorXd> head_norms;  // per head; empty if head not requested
};

struct EmbeddingBatch {
    /// Indexed by head id; empty for heads that were not requested.
    std::vector<Matrix> z;
    std::vector<bool> requested;
    std::size_t degenerate_rows = 0;  // head outputs with norm below kNormEpsilon
    ForwardTape tape;
    bool retained = false;
};

inline constexpr double kNormEpsilon = 1e-12;

/// Runs the network on a batch. Dropout is active only when `training`;
/// its mask is a pure function of `dropout_seed`.
inline EmbeddingBatch forward(const NetworkParameters& p, const Matrix& x, const std::vector<int>& head_ids,
                              bool training = false, std::uint64_t dropout_seed = 0) {
    const ModelConfig& cfg = p.config;
    if (x.cols() != cfg.f)
        throw DataError("input has " + std::to_string(x.cols()) + " features, model expects " + std::to_string(cfg.f));

    EmbeddingBatch out;
    out.retained = true;
    auto& tape = out.tape;
    tape.input = x;
    tape.hidden.reserve(static_cast<std::size_t>(cfg.depth) + 1);
    tape.hidden.push_back((x * p.weight(0)).rowwise() + p.bias(0).row(0));

    const bool use_dropout = training && cfg.dropout_rate > 0.0;
    std::mt19937_64 rng(dropout_seed);
    std::bernoulli_distribution keep(1.0 - cfg.dropout_rate);
    const double keep_scale = use_dropout ? 1.0 / (1.0 - cfg.dropout_rate) : 1.0;

    for (int k = 0; k < cfg.depth; ++k) {
        const std::size_t layer = NetworkParameters::block_layer(static_cast<std::size_t>(k));
        Matrix a = (tape.hidden.back() * p.weight(layer)).rowwise() + p.bias(layer).row(0);
        Matrix h = a.cwiseMax(0.0);
        if (use_dropout) {
            Matrix mask(h.rows(), h.cols());
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
                for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = keep(rng) ? keep_scale : 0.0;
            h = h.cwiseProduct(mask);
            tape.masks.push_back(std::move(mask));
        } else {
            tape.masks.emplace_back();
        }
        tape.pre_relu.push_back(std::move(a));
        tape.hidden.push_back(std::move(h));
    }

    const auto n_heads = static_cast<std::size_t>(cfg.n_heads);
    out.z.resize(n_heads);
    out.requested.assign(n_heads, false);
    tape.head_norms.resize(n_heads);
    for (int c : head_ids) {
        if (c < 0 || static_cast<std::size_t>(c) >= n_heads) throw ConfigError("head id out of range");
        const auto hc = static_cast<std::size_t>(c);
        if (out.requested[hc]) continue;
        out.requested[hc] = true;
        const std::size_t layer = p.head_layer(hc);
        Matrix v = (tape.hidden.back() * p.weight(layer)).rowwise() + p.bias(layer).row(0);
        if (cfg.head == HeadKind::sphere) {
            Eigen::VectorXd norms = v.rowwise().norm();
            for (Eigen::Index i = 0; i < v.rows(); ++i) {
                if (norms(i) < kNormEpsilon) {
                    ++out.degenerate_rows;
                    norms(i) = kNormEpsilon;
                }
                v.row(i) /= norms(i);
            }
            tape.head_norms[hc] = std::move(norms);
        }
        out.z[hc] = std::move(v);
    }
    return out;
}

/// Convenience: inference-mode forward over all heads.
inline EmbeddingBatch embed(const NetworkParameters& p, const Matrix& x) {
    std::vector<int> heads(static_cast<std::size_t>(p.config.n_heads));
    for (std::size_t c = 0; c < heads.size(); ++c) heads[c] = static_cast<int>(c);
    return forward(p, x, heads, false, 0);
}

/// Reverse-mode gradient of a loss with respect to every parameter, given
/// the loss gradient with respect to each head's output. An empty upstream
/// matrix means that head contributes nothing.
inline NetworkParameters backward(const NetworkParameters& p, const EmbeddingBatch& batch,
                                  const std::vector<Matrix>& upstream) {
    if (!batch.retained) throw ConfigError("backward requires activations retained by forward");
    const ModelConfig& cfg = p.config;
    const auto& tape = batch.tape;
    NetworkParameters grad = p.zeros_like();

    Matrix d_hidden = Matrix::Zero(tape.hidden.back().rows(), tape.hidden.back().cols());
    for (std::size_t c = 0; c < upstream.size() && c < static_cast<std::size_t>(cfg.n_heads); ++c) {
        if (upstream[c].size() == 0) continue;
        if (!batch.requested[c]) throw ConfigError("upstream gradient given for a head that was not computed");
        const Matrix& g = upstream[c];
        const Matrix& z = batch.z[c];
        if (g.rows() != z.rows() || g.cols() != z.cols()) throw ConfigError("upstream gradient shape mismatch");
        Matrix dv;
        if (cfg.head == HeadKind::sphere) {
            // d(v/|v|)/dv = (I - z z^T) / |v|
            const Eigen::VectorXd radial = z.cwiseProduct(g).rowwise().sum();
            dv = g - radial.asDiagonal() * z;
            dv = tape.head_norms[c].cwiseInverse().asDiagonal() * dv;
        } else {
            dv = g;
        }
        const std::size_t layer = p.head_layer(c);
        grad.weight(layer).noalias() += tape.hidden.back().transpose() * dv;
        grad.bias(layer) += dv.colwise().sum();
        d_hidden.noalias() += dv * p.weight(layer).transpose();
    }

    for (int k = cfg.depth - 1; k >= 0; --k) {
        const auto uk = static_cast<std::size_t>(k);
        const std::size_t layer = NetworkParameters::block_layer(uk);
        Matrix d_act = d_hidden;
        if (tape.masks[uk].size() != 0) d_act = d_act.cwiseProduct(tape.masks[uk]);
        d_act = (tape.pre_relu[uk].array() > 0.0).select(d_act.array(), 0.0).matrix();
        grad.weight(layer).noalias() += tape.hidden[uk].transpose() * d_act;
        grad.bias(layer) += d_act.colwise().sum();
        d_hidden = d_act * p.weight(layer).transpose();
    }
    grad.weight(0).noalias() += tape.input.transpose() * d_hidden;
    grad.bias(0) += d_hidden.colwise().sum();
    return grad;
}

}  // namespace closr
