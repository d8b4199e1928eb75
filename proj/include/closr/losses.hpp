#pragma once

// Training objectives with analytic gradients with respect to the head
// outputs: binary cross-entropy, supervised contrastive, the benign-anchored
// contrastive loss (with margin, squaring and concentration-ratio switches),
// its symmetric all-anchor variant, and the per-class open-set sum.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "closr/data.hpp"
#include "closr/error.hpp"

namespace closr {

enum class LossKind { bce, supcon, clad, closr, contrastive };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::bce: return "bce";
        case LossKind::supcon: return "supcon";
        case LossKind::clad: return "clad";
        case LossKind::closr: return "closr";
        case LossKind::contrastive: return "contrastive";
    }
    return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "bce") return LossKind::bce;
    if (s == "supcon") return LossKind::supcon;
    if (s == "clad") return LossKind::clad;
    if (s == "closr") return LossKind::closr;
    if (s == "contrastive") return LossKind::contrastive;
    throw ConfigError("unknown loss kind '" + s + "'");
}

struct LossConfig {
    LossKind kind = LossKind::clad;
    double margin = 1.0;
    bool squared = true;
    double alpha = 0.5;  // kappa_0 / (kappa_0 + kappa_1)
    double temperature = 0.1;

    void validate() const {
        if (!(margin > 0.0 && margin <= 1.0)) throw ConfigError("margin must lie in (0,1]");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
        if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    }
};

struct LossResult {
    double value = 0.0;
    /// Gradient with respect to each head's output; empty for unused heads.
    std::vector<Matrix> grad;
    std::size_t anchors_used = 0;
    std::size_t anchors_skipped = 0;
};

/// Rescaled cosine distance (1 - z.z')/2 between unit vectors, in [0,1].
template <typename A, typename B>
double cosine_distance(const Eigen::MatrixBase<A>& z, const Eigen::MatrixBase<B>& z2) {
    assert(std::abs(z.norm() - 1.0) < 1e-6 && std::abs(z2.norm() - 1.0) < 1e-6);
    const double d = 0.5 * (1.0 - z.dot(z2));
    return std::clamp(d, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

/// Mean binary cross-entropy on logits, in log-sum-exp form.
/// Returns the loss and d loss / d logit.
inline std::pair<double, Eigen::VectorXd> bce_loss(const Eigen::VectorXd& logits, const std::vector<int>& binary) {
    if (static_cast<std::size_t>(logits.size()) != binary.size()) throw ConfigError("bce: length mismatch");
    if (binary.empty()) throw DataError("bce: empty batch");
    const auto n = static_cast<double>(binary.size());
    double total = 0.0;
    Eigen::VectorXd grad(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const double l = logits(i);
        const double y = binary[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0;
        total += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
        const double sig = l >= 0.0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
        grad(i) = (sig - y) / n;
    }
    return {total / n, grad};
}

/// Supervised contrastive loss over one head. Anchors without positives are
/// skipped; the mean is over anchors that have at least one positive.
inline LossResult supcon_loss(const Matrix& z, const std::vector<int>& labels, double temperature) {
    const auto b = static_cast<Eigen::Index>(labels.size());
    if (z.rows() != b) throw ConfigError("supcon: embedding/label count mismatch");
    if (!(temperature > 0.0)) throw ConfigError("supcon: temperature must be positive");
    const Matrix gram = z * z.transpose();
    Matrix coef = Matrix::Zero(b, b);  // d loss / d gram(i, j), before averaging
    LossResult r;
    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        std::size_t n_pos = 0;
        double max_logit = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) ++n_pos;
            max_logit = std::max(max_logit, gram(i, j) / temperature);
        }
        if (n_pos == 0) {
            ++r.anchors_skipped;
            continue;
        }
        ++r.anchors_used;
        double denom = 0.0;
        for (Eigen::Index j = 0; j < b; ++j)
            if (j != i) denom += std::exp(gram(i, j) / temperature - max_logit);
        const double lse = max_logit + std::log(denom);
        double pos_sum = 0.0;
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            const double soft = std::exp(gram(i, j) / temperature - lse);
            coef(i, j) += soft / temperature;
            if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
                pos_sum += gram(i, j) / temperature;
                coef(i, j) -= 1.0 / (static_cast<double>(n_pos) * temperature);
            }
        }
        total += lse - pos_sum / static_cast<double>(n_pos);
    }
    if (r.anchors_used == 0) throw DataError("supcon: every anchor lacks positives");
    const double scale = 1.0 / static_cast<double>(r.anchors_used);
    r.value = total * scale;
    coef *= scale;
    r.grad = {(coef + coef.transpose()) * z};
    return r;
}

namespace detail {

// Generalized anchored contrastive term over one head. Anchors are rows in
// `anchor_group` (or every row when `all_anchors`); positives share the
// anchor's group and negatives do not. Returns the mean over non-skipped
// anchors.
inline LossResult anchored_contrast(const Matrix& z, const std::vector<int>& group, bool all_anchors, int anchor_group,
                                    const LossConfig& cfg) {
    const auto b = static_cast<Eigen::Index>(group.size());
    if (z.rows() != b) throw ConfigError("loss: embedding/label count mismatch");
    const double q = cfg.squared ? 2.0 : 1.0;
    const double w_pos = 2.0 * cfg.alpha;
    const double w_neg = 2.0 * (1.0 - cfg.alpha);
    const Matrix gram = z * z.transpose();
    Matrix coef = Matrix::Zero(b, b);
    LossResult r;
    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        const int gi = group[static_cast<std::size_t>(i)];
        if (!all_anchors && gi != anchor_group) continue;
        std::size_t n_pos = 0;
        std::size_t n_neg = 0;
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            (group[static_cast<std::size_t>(j)] == gi ? n_pos : n_neg) += 1;
        }
        if (n_pos == 0 && n_neg == 0) {
            ++r.anchors_skipped;
            continue;
        }
        ++r.anchors_used;
        double pos = 0.0;
        double neg = 0.0;
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            const double raw = 0.5 * (1.0 - gram(i, j));
            const double d = std::clamp(raw, 0.0, 1.0);
            const double dd_dgram = (raw >= 0.0 && raw <= 1.0) ? -0.5 : 0.0;
            if (group[static_cast<std::size_t>(j)] == gi) {
                const double inv = 1.0 / static_cast<double>(n_pos);
                pos += std::pow(d, q) * inv;
                const double dterm = cfg.squared ? 2.0 * d : 1.0;
                coef(i, j) += w_pos * inv * dterm * dd_dgram;
            } else {
                const double inv = 1.0 / static_cast<double>(n_neg);
                const double hinge = cfg.margin - d;
                if (hinge > 0.0) {
                    neg += std::pow(hinge, q) * inv;
                    const double dterm = cfg.squared ? 2.0 * hinge : 1.0;
                    coef(i, j) -= w_neg * inv * dterm * dd_dgram;
                }
            }
        }
        total += w_pos * pos + w_neg * neg;
    }
    if (r.anchors_used > 0) {
        const double scale = 1.0 / static_cast<double>(r.anchors_used);
        r.value = total * scale;
        coef *= scale;
    }
    r.grad = {(coef + coef.transpose()) * z};
    return r;
}

}  // namespace detail

/// Benign-anchored contrastive loss on head-0 embeddings. Label 0 is benign.
/// With margin 1, squared distances and alpha 0.5 every benign anchor
/// contributes mean_p d(z_i,z_p)^2 + mean_n (1 - d(z_i,z_n))^2.
inline LossResult clad_loss(const Matrix& z, const std::vector<int>& labels, const LossConfig& cfg) {
    cfg.validate();
    std::vector<int> group(labels.size());
    bool any_benign = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        group[i] = labels[i] == 0 ? 0 : 1;
        any_benign = any_benign || labels[i] == 0;
    }
    if (!any_benign) throw DataError("clad: batch has no benign rows");
    auto r = detail::anchored_contrast(z, group, false, 0, cfg);
    if (r.anchors_used == 0) throw DataError("clad: every benign anchor was skipped");
    return r;
}

/// Symmetric variant: every row is an anchor, grouped by its full label.
inline LossResult contrastive_loss(const Matrix& z, const std::vector<int>& labels, const LossConfig& cfg) {
    cfg.validate();
    auto r = detail::anchored_contrast(z, labels, true, 0, cfg);
    if (r.anchors_used == 0) throw DataError("contrastive: every anchor was skipped");
    return r;
}

/// Sum over classes present in the batch of the anchored loss in which
/// class-c rows are anchors on head c. `heads[c]` holds head-c embeddings.
inline LossResult closr_loss(const std::vector<Matrix>& heads, const std::vector<int>& labels, const LossConfig& cfg) {
    cfg.validate();
    if (labels.empty()) throw DataError("closr: empty batch");
    const auto n_heads = static_cast<int>(heads.size());
    std::vector<bool> present(heads.size(), false);
    for (int y : labels) {
        if (y < 0 || y >= n_heads) throw ConfigError("closr: label without a projection head");
        present[static_cast<std::size_t>(y)] = true;
    }
    LossResult total;
    total.grad.resize(heads.size());
    for (std::size_t c = 0; c < heads.size(); ++c) {
        if (!present[c]) continue;
        std::vector<int> group(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) group[i] = labels[i] == static_cast<int>(c) ? 0 : 1;
        auto r = detail::anchored_contrast(heads[c], group, false, 0, cfg);
        total.anchors_skipped += r.anchors_skipped;
        if (r.anchors_used == 0) continue;
        total.anchors_used += r.anchors_used;
        total.value += r.value;
        total.grad[c] = std::move(r.grad[0]);
    }
    if (total.anchors_used == 0) throw DataError("closr: every anchor was skipped");
    return total;
}

/// Dispatches on the loss kind. `heads` is indexed by head id; for bce the
/// logit is column 0 of head 0.
inline LossResult evaluate_loss(const LossConfig& cfg, const std::vector<Matrix>& heads, const std::vector<int>& labels) {
    if (heads.empty() || heads[0].size() == 0) throw ConfigError("loss: head 0 output missing");
    switch (cfg.kind) {
        case LossKind::bce: {
            std::vector<int> binary(labels.size());
            for (std::size_t i = 0; i < labels.size(); ++i) binary[i] = labels[i] != 0 ? 1 : 0;
            const Eigen::VectorXd logits = heads[0].col(0);
            auto [value, g] = bce_loss(logits, binary);
            LossResult r;
            r.value = value;
            r.anchors_used = labels.size();
            Matrix grad0 = Matrix::Zero(heads[0].rows(), heads[0].cols());
            grad0.col(0) = g;
            r.grad = {std::move(grad0)};
            return r;
        }
        case LossKind::supcon: return supcon_loss(heads[0], labels, cfg.temperature);
        case LossKind::clad: return clad_loss(heads[0], labels, cfg);
        case LossKind::contrastive: return contrastive_loss(heads[0], labels, cfg);
        case LossKind::closr: return closr_loss(heads, labels, cfg);
    }
    throw ConfigError("unknown loss kind");
}

}  // namespace closr
