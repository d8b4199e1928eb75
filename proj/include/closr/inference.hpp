#pragma once

// Class proxies (centroid and its robust variants), out-of-distribution
// scores and decision rules for the binary and open-set settings.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "closr/data.hpp"
#include "closr/error.hpp"
#include "closr/model.hpp"

namespace closr {

enum class ProxyKind { centroid, median, trimmed_mean, medoid, neighbour };

inline std::string to_string(ProxyKind k) {
    switch (k) {
        case ProxyKind::centroid: return "centroid";
        case ProxyKind::median: return "median";
        case ProxyKind::trimmed_mean: return "trimmed_mean";
        case ProxyKind::medoid: return "medoid";
        case ProxyKind::neighbour: return "neighbour";
    }
    return "?";
}

inline ProxyKind proxy_kind_from_string(const std::string& s) {
    if (s == "centroid") return ProxyKind::centroid;
    if (s == "median") return ProxyKind::median;
    if (s == "trimmed_mean") return ProxyKind::trimmed_mean;
    if (s == "medoid") return ProxyKind::medoid;
    if (s == "neighbour") return ProxyKind::neighbour;
    throw ConfigError("unknown class proxy '" + s + "'");
}

/// Representative of one class on its hypersphere. For the neighbour proxy
/// the full row set is kept and similarity is to the nearest stored row.
struct ClassProxy {
    ProxyKind method = ProxyKind::centroid;
    Eigen::VectorXd direction;  // unit vector; unused by neighbour
    Matrix rows;                // neighbour only

    /// `z` may be a row or a column vector.
    template <typename V>
    [[nodiscard]] double similarity(const Eigen::MatrixBase<V>& z) const {
        const Eigen::VectorXd v = z.derived().reshaped();
        if (method != ProxyKind::neighbour) return direction.dot(v);
        return (rows * v).maxCoeff();
    }
};

inline constexpr double kTrimFraction = 0.10;

namespace detail {

inline Eigen::VectorXd normalized(const Eigen::VectorXd& v, const char* what) {
    const double n = v.norm();
    if (!(n > kNormEpsilon)) throw NumericError(std::string(what) + ": proxy direction has zero norm");
    return v / n;
}

}  // namespace detail

/// Computes the proxy of one class from its unit-norm embedding rows.
inline ClassProxy compute_centroid(const Matrix& rows, ProxyKind method = ProxyKind::centroid) {
    if (rows.rows() == 0) throw DataError("compute_centroid: no embeddings for class");
    ClassProxy proxy;
    proxy.method = method;
    const Eigen::VectorXd sum = rows.colwise().sum().transpose();
    switch (method) {
        case ProxyKind::centroid: proxy.direction = detail::normalized(sum, "centroid"); break;
        case ProxyKind::median: {
            Eigen::VectorXd med(rows.cols());
            std::vector<double> col(static_cast<std::size_t>(rows.rows()));
            for (Eigen::Index j = 0; j < rows.cols(); ++j) {
                for (Eigen::Index i = 0; i < rows.rows(); ++i) col[static_cast<std::size_t>(i)] = rows(i, j);
                std::sort(col.begin(), col.end());
                const std::size_t n = col.size();
                med(j) = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
            }
            proxy.direction = detail::normalized(med, "median");
            break;
        }
        case ProxyKind::trimmed_mean: {
            const Eigen::VectorXd center = detail::normalized(sum, "trimmed_mean");
            const Eigen::VectorXd sim = rows * center;
            std::vector<Eigen::Index> order(static_cast<std::size_t>(rows.rows()));
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            // farthest first: lowest similarity
            std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return sim(a) < sim(b); });
            const auto n_trim =
                static_cast<std::size_t>(std::floor(kTrimFraction * static_cast<double>(rows.rows())));
            Eigen::VectorXd kept = Eigen::VectorXd::Zero(rows.cols());
            for (std::size_t k = n_trim; k < order.size(); ++k) kept += rows.row(order[k]).transpose();
            proxy.direction = detail::normalized(kept, "trimmed_mean");
            break;
        }
        case ProxyKind::medoid: {
            // sum_j d(z_i, z_j) = (n - z_i . sum_j z_j) / 2, so the medoid
            // maximizes z_i . sum.
            const Eigen::VectorXd score = rows * sum;
            Eigen::Index best = 0;
            for (Eigen::Index i = 1; i < score.size(); ++i)
                if (score(i) > score(best)) best = i;
            proxy.direction = detail::normalized(rows.row(best).transpose(), "medoid");
            break;
        }
        case ProxyKind::neighbour:
            proxy.rows = rows;
            proxy.direction = sum.norm() > kNormEpsilon ? Eigen::VectorXd(sum / sum.norm()) : Eigen::VectorXd(sum);
            break;
    }
    return proxy;
}

/// One proxy per modeled class / head.
struct CentroidSet {
    ProxyKind method = ProxyKind::centroid;
    std::vector<ClassProxy> proxies;

    [[nodiscard]] std::size_t size() const { return proxies.size(); }
};

/// Binary mode: the benign proxy from head 0 over benign rows.
/// Open-set mode: proxy c from head c over class-c rows.
inline CentroidSet compute_centroids(const EmbeddingBatch& emb, const std::vector<int>& labels, bool open_set,
                                     ProxyKind method = ProxyKind::centroid) {
    CentroidSet set;
    set.method = method;
    const std::size_t n_proxies = open_set ? emb.z.size() : 1;
    for (std::size_t c = 0; c < n_proxies; ++c) {
        const Matrix& z = emb.z[c];
        if (z.size() == 0) throw ConfigError("compute_centroids: head " + std::to_string(c) + " not embedded");
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == static_cast<int>(c)) rows.push_back(static_cast<Eigen::Index>(i));
        if (rows.empty()) throw DataError("compute_centroids: class " + std::to_string(c) + " has no rows");
        Matrix sel(static_cast<Eigen::Index>(rows.size()), z.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) sel.row(static_cast<Eigen::Index>(k)) = z.row(rows[k]);
        set.proxies.push_back(compute_centroid(sel, method));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Binary

/// Negative cosine similarity to the benign mean direction, in [-1,1].
template <typename A, typename B>
double score_binary(const Eigen::MatrixBase<A>& z, const Eigen::MatrixBase<B>& mu) {
    return -z.dot(mu);
}

/// 0 (benign) iff s < tau, else 1.
inline int predict_binary(double s, double tau) { return s < tau ? 0 : 1; }

/// Binary OOD score for every row of head-0 embeddings.
inline Eigen::VectorXd binary_scores(const Matrix& z, const ClassProxy& benign) {
    Eigen::VectorXd s(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) s(i) = -benign.similarity(z.row(i));
    return s;
}

// ---------------------------------------------------------------------------
// Open set

/// Softmax over per-class similarities, with max subtraction.
inline Eigen::VectorXd closed_set_probs(const Eigen::VectorXd& similarities) {
    if (similarities.size() == 0) throw ConfigError("closed_set_probs: no classes");
    const Eigen::ArrayXd e = (similarities.array() - similarities.maxCoeff()).exp();
    return (e / e.sum()).matrix();
}

/// Similarity of sample i to every class proxy, each in its own head.
inline Eigen::VectorXd class_similarities(const EmbeddingBatch& emb, Eigen::Index row, const CentroidSet& centroids) {
    Eigen::VectorXd sims(static_cast<Eigen::Index>(centroids.size()));
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (emb.z[c].size() == 0) throw ConfigError("class_similarities: missing head " + std::to_string(c));
        sims(static_cast<Eigen::Index>(c)) = centroids.proxies[c].similarity(emb.z[c].row(row));
    }
    return sims;
}

enum class OodScore { weighted_gaussian, gaussian, energy };

inline std::string to_string(OodScore k) {
    switch (k) {
        case OodScore::weighted_gaussian: return "weighted_gaussian";
        case OodScore::gaussian: return "gaussian";
        case OodScore::energy: return "energy";
    }
    return "?";
}

inline OodScore ood_score_from_string(const std::string& s) {
    if (s == "weighted_gaussian") return OodScore::weighted_gaussian;
    if (s == "gaussian") return OodScore::gaussian;
    if (s == "energy") return OodScore::energy;
    throw ConfigError("unknown OOD score '" + s + "'");
}

/// Index of the largest probability; ties go to the lowest index.
inline int argmax_lowest(const Eigen::VectorXd& probs) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.size(); ++c)
        if (probs(c) > probs(best)) best = c;
    return static_cast<int>(best);
}

/// Open-set OOD score; larger means less likely to be any known class.
inline double score_osr(const Eigen::VectorXd& similarities, const Eigen::VectorXd& probs, OodScore variant) {
    if (similarities.size() != probs.size()) throw ConfigError("score_osr: size mismatch");
    switch (variant) {
        case OodScore::weighted_gaussian: return -(probs.array() * similarities.array().square()).sum();
        case OodScore::gaussian: {
            const double s = similarities(argmax_lowest(probs));
            return -s * s;
        }
        case OodScore::energy: {
            const double m = similarities.maxCoeff();
            return -(m + std::log((similarities.array() - m).exp().sum()));
        }
    }
    throw ConfigError("score_osr: unknown variant");
}

/// -1 (unknown) if s > tau, else the closed-set argmax.
inline int predict_osr(double s, double tau, const Eigen::VectorXd& probs) {
    return s > tau ? -1 : argmax_lowest(probs);
}

// ---------------------------------------------------------------------------
// Threshold selection

/// Threshold on scores of in-distribution validation rows such that at most
/// a `target_fpr` fraction of them is flagged. `strict` selects the flag
/// rule: s > tau (open set) when true, s >= tau (binary) when false.
inline double threshold_for_fpr(std::vector<double> scores, double target_fpr, bool strict) {
    if (scores.empty()) throw DataError("threshold_for_fpr: no validation scores");
    if (!(target_fpr >= 0.0 && target_fpr < 1.0)) throw ConfigError("target FPR must lie in [0,1)");
    std::sort(scores.begin(), scores.end());
    const auto n = scores.size();
    const auto allowed = static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(n)));
    const double pivot = scores[n - allowed - 1];
    return strict ? pivot : std::nextafter(pivot, std::numeric_limits<double>::infinity());
}

}  // namespace closr
