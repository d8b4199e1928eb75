#pragma once

// AdamW, the linear-warmup + cosine learning-rate schedule, and the
// training loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "closr/data.hpp"
#include "closr/error.hpp"
#include "closr/losses.hpp"
#include "closr/model.hpp"

namespace closr {

struct TrainConfig {
    int epochs = 200;
    int warmup_epochs = 20;
    double base_lr = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch_size = 128;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be non-negative");
        if (epochs > 0 && warmup_epochs >= epochs) throw ConfigError("warmup_epochs must be smaller than epochs");
        if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
        if (batch_size < 4) throw ConfigError("batch_size must be at least 4");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0,1)");
        if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
    }
};

/// Per-epoch learning rate: linear warmup to base_lr, then cosine decay to 0.
inline double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) throw ConfigError("lr_at: epoch out of range");
    if (epoch < cfg.warmup_epochs)
        return cfg.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
    const double progress =
        static_cast<double>(epoch - cfg.warmup_epochs) / static_cast<double>(cfg.epochs - cfg.warmup_epochs);
    return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct OptimizerState {
    NetworkParameters first_moment;
    NetworkParameters second_moment;
    std::uint64_t step = 0;

    static OptimizerState for_params(const NetworkParameters& p) {
        return {p.zeros_like(), p.zeros_like(), 0};
    }
};

/// One bias-corrected Adam step with decoupled weight decay on weights
/// (biases are not decayed). Throws NumericError on a non-finite gradient
/// before touching any state.
inline void adamw_step(NetworkParameters& p, const NetworkParameters& g, OptimizerState& s, double lr,
                       const TrainConfig& cfg) {
    if (g.tensors.size() != p.tensors.size() || s.first_moment.tensors.size() != p.tensors.size())
        throw ConfigError("adamw: tensor count mismatch");
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
        if (g.tensors[t].rows() != p.tensors[t].rows() || g.tensors[t].cols() != p.tensors[t].cols())
            throw ConfigError("adamw: gradient shape mismatch");
        if (!g.tensors[t].allFinite()) throw NumericError("adamw: non-finite gradient entry, step aborted");
    }
    ++s.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
        auto& param = p.tensors[t];
        auto& m = s.first_moment.tensors[t];
        auto& v = s.second_moment.tensors[t];
        const auto& grad = g.tensors[t];
        if (!NetworkParameters::is_bias(t)) param *= 1.0 - lr * cfg.weight_decay;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_epsilon);
    }
}

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double loss_mean = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    NetworkParameters params;
    FeatureScaler scaler;
    std::vector<EpochLog> log;
};

/// Raised when the loss or parameters become non-finite; carries the last
/// parameters that were finite.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, NetworkParameters last_good)
        : NumericError(what), last_good_(std::move(last_good)) {}
    [[nodiscard]] const NetworkParameters& last_good() const { return last_good_; }

private:
    NetworkParameters last_good_;
};

/// Heads the loss needs during training.
inline std::vector<int> training_heads(const ModelConfig& mcfg, const LossConfig& lcfg) {
    if (lcfg.kind != LossKind::closr) return {0};
    std::vector<int> heads(static_cast<std::size_t>(mcfg.n_heads));
    for (std::size_t c = 0; c < heads.size(); ++c) heads[c] = static_cast<int>(c);
    return heads;
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

using EpochCallback = std::function<void(const EpochLog&)>;

/// Full training loop: fit scaler on the training data, then per epoch draw
/// class-balanced batches, run forward (training mode), loss, backward and
/// AdamW. Deterministic given the seeds in the three configs.
inline TrainResult train(const FlowDataset& data, const TrainConfig& tcfg, const ModelConfig& mcfg,
                         const LossConfig& lcfg, double clamp_bound = 10.0, const EpochCallback& on_epoch = {}) {
    tcfg.validate();
    mcfg.validate();
    lcfg.validate();
    data.validate();
    if (data.size() == 0) throw DataError("train: empty training data");
    if (static_cast<int>(data.num_features()) != mcfg.f) throw ConfigError("train: model f does not match data");
    if (lcfg.kind == LossKind::closr && mcfg.n_heads != static_cast<int>(data.num_classes()))
        throw ConfigError("train: closr needs one head per class");
    if ((lcfg.kind == LossKind::bce) != (mcfg.head == HeadKind::linear))
        throw ConfigError("train: bce requires a linear head and the contrastive losses a sphere head");

    TrainResult result;
    result.scaler = fit_scaler(data, clamp_bound);
    const Matrix x = result.scaler.transform(data.features);
    result.params = init_network(mcfg);

    BalancedBatchSampler sampler(data, make_batch_plan(data, tcfg.batch_size, tcfg.seed));
    OptimizerState state = OptimizerState::for_params(result.params);
    const auto heads = training_heads(mcfg, lcfg);

    Matrix xb(static_cast<Eigen::Index>(tcfg.batch_size), x.cols());
    std::vector<int> yb(tcfg.batch_size);
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const double lr = lr_at(epoch, tcfg);
        double loss_sum = 0.0;
        const auto batches = sampler.next_epoch();
        for (const auto& rows : batches) {
            for (std::size_t k = 0; k < rows.size(); ++k) {
                xb.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
                yb[k] = data.labels[rows[k]];
            }
            const auto dropout_seed = detail::mix_seed(tcfg.seed, state.step);
            const auto emb = forward(result.params, xb, heads, true, dropout_seed);
            const auto loss = evaluate_loss(lcfg, emb.z, yb);
            if (!std::isfinite(loss.value))
                throw TrainingDiverged("training loss became non-finite at epoch " + std::to_string(epoch),
                                       result.params);
            const auto grad = backward(result.params, emb, loss.grad);
            NetworkParameters before = result.params;
            try {
                adamw_step(result.params, grad, state, lr, tcfg);
            } catch (const NumericError& e) {
                throw TrainingDiverged(e.what(), std::move(before));
            }
            if (!result.params.all_finite())
                throw TrainingDiverged("parameters became non-finite at epoch " + std::to_string(epoch),
                                       std::move(before));
            loss_sum += loss.value;
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.loss_mean = loss_sum / static_cast<double>(batches.size());
        entry.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return result;
}

}  // namespace closr
