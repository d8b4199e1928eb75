#pragma once

// Threshold-free and closed-set evaluation metrics.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "closr/data.hpp"
#include "closr/error.hpp"

namespace closr {

namespace detail {

inline void check_binary_input(const std::vector<double>& scores, const std::vector<int>& positives, const char* what) {
    if (scores.size() != positives.size()) throw ConfigError(std::string(what) + ": length mismatch");
    const auto n_pos = std::count_if(positives.begin(), positives.end(), [](int p) { return p != 0; });
    if (n_pos == 0 || n_pos == static_cast<std::ptrdiff_t>(positives.size()))
        throw DataError(std::string(what) + ": needs at least one positive and one negative");
}

}  // namespace detail

/// Mann-Whitney AUROC with half credit for ties, via midranks.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& positives) {
    detail::check_binary_input(scores, positives, "auroc");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // twice the midrank keeps every quantity integral
    double rank2_sum = 0.0;
    double n_pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double rank2 = static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (positives[order[k]] != 0) {
                rank2_sum += rank2;
                n_pos += 1.0;
            }
        }
        i = j;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    const double u2 = rank2_sum - n_pos * (n_pos + 1.0);  // 2 * (#wins + 0.5 #ties)
    return (0.5 * u2) / (n_pos * n_neg);
}

/// False-positive rate at the largest threshold whose recall reaches
/// `recall_target` (rows with score >= threshold are flagged).
inline double fpr_at_recall(const std::vector<double>& scores, const std::vector<int>& positives,
                            double recall_target = 0.95) {
    detail::check_binary_input(scores, positives, "fpr_at_recall");
    if (!(recall_target > 0.0 && recall_target <= 1.0)) throw ConfigError("recall target must lie in (0,1]");
    std::vector<double> pos;
    std::vector<double> neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (positives[i] != 0 ? pos : neg).push_back(scores[i]);
    std::sort(pos.begin(), pos.end(), std::greater<>());
    const auto n_pos = static_cast<double>(pos.size());
    std::size_t k = 1;
    while (static_cast<double>(k) / n_pos < recall_target) ++k;
    // ties below the k-th score are flagged too, which only raises recall
    const double threshold = pos[k - 1];
    const auto flagged = std::count_if(neg.begin(), neg.end(), [&](double s) { return s >= threshold; });
    return static_cast<double>(flagged) / static_cast<double>(neg.size());
}

/// Average precision: sum over distinct thresholds of
/// (recall_k - recall_{k-1}) * precision_k.
inline double pr_auc(const std::vector<double>& scores, const std::vector<int>& positives) {
    if (scores.size() != positives.size()) throw ConfigError("pr_auc: length mismatch");
    const auto total_pos = std::count_if(positives.begin(), positives.end(), [](int p) { return p != 0; });
    if (total_pos == 0) throw DataError("pr_auc: no positives");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    double tp = 0.0;
    double seen = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (positives[order[j]] != 0) tp += 1.0;
            seen += 1.0;
            ++j;
        }
        const double recall = tp / static_cast<double>(total_pos);
        ap += (recall - prev_recall) * (tp / seen);
        prev_recall = recall;
        i = j;
    }
    return ap;
}

struct ClassMetrics {
    int label = 0;
    std::size_t support = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fp_rate = 0.0;
};

struct ClosedSetReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double macro_fp_rate = 0.0;
    std::vector<ClassMetrics> per_class;  // classes present in the truth, ascending
};

/// One-vs-rest confusion counts per class present in `truth`, macro averaged.
/// Predictions outside the truth classes (e.g. -1 for unknown) count as errors.
inline ClosedSetReport closed_set_report(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw ConfigError("closed_set_report: length mismatch");
    if (truth.empty()) throw DataError("closed_set_report: empty input");
    std::map<int, std::size_t> classes;
    for (int y : truth) ++classes[y];
    const auto n = static_cast<double>(truth.size());
    ClosedSetReport r;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i] ? 1 : 0;
    r.accuracy = static_cast<double>(correct) / n;
    for (const auto& [c, support] : classes) {
        double tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool is_c = truth[i] == c;
            const bool pred_c = predicted[i] == c;
            if (is_c && pred_c) tp += 1;
            else if (!is_c && pred_c) fp += 1;
            else if (is_c) fn += 1;
            else tn += 1;
        }
        ClassMetrics m;
        m.label = c;
        m.support = support;
        m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        m.fp_rate = fp + tn > 0 ? fp / (fp + tn) : 0.0;
        r.per_class.push_back(m);
    }
    const auto k = static_cast<double>(r.per_class.size());
    for (const auto& m : r.per_class) {
        r.macro_precision += m.precision / k;
        r.macro_recall += m.recall / k;
        r.macro_f1 += m.f1 / k;
        r.macro_fp_rate += m.fp_rate / k;
    }
    return r;
}

struct OpenSetMetrics {
    double open_set_auc = 0.0;
    double closed_accuracy = 0.0;
    double open_auc = 0.0;  // closed_accuracy * open_set_auc
};

/// Open-set AUC of the OOD scores for unknown-vs-known rows, and the
/// product of closed-set accuracy on known rows with it.
inline OpenSetMetrics open_set_metrics(const std::vector<double>& osr_scores, const std::vector<int>& is_unknown,
                                       const std::vector<int>& closed_pred, const std::vector<int>& closed_truth) {
    if (closed_pred.size() != closed_truth.size() || closed_truth.empty())
        throw DataError("open_set_metrics: need closed-set predictions for at least one known row");
    OpenSetMetrics m;
    m.open_set_auc = auroc(osr_scores, is_unknown);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < closed_truth.size(); ++i) correct += closed_pred[i] == closed_truth[i] ? 1 : 0;
    m.closed_accuracy = static_cast<double>(correct) / static_cast<double>(closed_truth.size());
    m.open_auc = m.closed_accuracy * m.open_set_auc;
    return m;
}

struct RankResult {
    double normalized = 0.0;
    int rank = 0;
    bool zero_matrix = false;
};

inline constexpr double kRankTolerance = 1e-6;

/// Numerical rank (singular values >= 1e-6 * largest) divided by the
/// embedding dimension.
inline RankResult normalized_rank(const Matrix& e) {
    if (e.rows() == 0 || e.cols() == 0) throw DataError("normalized_rank: empty matrix");
    RankResult r;
    const Eigen::MatrixXd dense = e;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
    const auto& sv = svd.singularValues();
    const double largest = sv.size() > 0 ? sv(0) : 0.0;
    if (!(largest > 0.0)) {
        r.zero_matrix = true;
        return r;
    }
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) >= kRankTolerance * largest) ++r.rank;
    r.normalized = static_cast<double>(r.rank) / static_cast<double>(e.cols());
    return r;
}

}  // namespace closr
