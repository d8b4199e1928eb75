#pragma once

// Independent reference implementations used only by the tests. They are
// deliberately naive: plain loops, no shared code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "closr/closr.hpp"

namespace oracle {

// O(P*N) Mann-Whitney pair count with half credit for ties.
inline double auroc_pairs(const std::vector<double>& s, const std::vector<int>& pos) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!pos[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (pos[j]) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

// Try every distinct score as a threshold (flag s >= t); keep the largest
// threshold whose recall reaches the target and report its FPR.
inline double fpr_scan(const std::vector<double>& s, const std::vector<int>& pos, double target) {
    std::set<double> candidates(s.begin(), s.end());
    double best_t = -INFINITY;
    for (double t : candidates) {
        double tp = 0, p = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!pos[i]) continue;
            p += 1;
            if (s[i] >= t) tp += 1;
        }
        if (tp / p >= target) best_t = std::max(best_t, t);
    }
    double fp = 0, n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (pos[i]) continue;
        n += 1;
        if (s[i] >= best_t) fp += 1;
    }
    return fp / n;
}

inline double dist(const closr::Matrix& z, std::size_t i, std::size_t j) {
    double dot = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k)
        dot += z(static_cast<Eigen::Index>(i), k) * z(static_cast<Eigen::Index>(j), k);
    return 0.5 * (1.0 - dot);
}

// Scalar CLAD: anchors are rows with group == anchor_group (or all rows).
inline double clad(const closr::Matrix& z, const std::vector<int>& group, double m, bool squared, double alpha,
                   bool all_anchors = false, int anchor_group = 0) {
    const double q = squared ? 2.0 : 1.0;
    double total = 0.0;
    int anchors = 0;
    const auto n = static_cast<std::size_t>(z.rows());
    for (std::size_t i = 0; i < n; ++i) {
        if (!all_anchors && group[i] != anchor_group) continue;
        double pos = 0, neg = 0;
        int np = 0, nn = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = dist(z, i, j);
            if (group[j] == group[i]) {
                pos += std::pow(d, q);
                ++np;
            } else {
                neg += std::pow(std::max(0.0, m - d), q);
                ++nn;
            }
        }
        if (np == 0 && nn == 0) continue;
        double term = 0.0;
        if (np > 0) term += 2.0 * alpha * pos / np;
        if (nn > 0) term += 2.0 * (1.0 - alpha) * neg / nn;
        total += term;
        ++anchors;
    }
    return total / anchors;
}

// Scalar supervised contrastive loss, averaged over anchors with positives.
inline double supcon(const closr::Matrix& z, const std::vector<int>& y, double tau) {
    const auto n = static_cast<std::size_t>(z.rows());
    double total = 0.0;
    int anchors = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        int np = 0;
        for (std::size_t a = 0; a < n; ++a) {
            if (a == i) continue;
            denom += std::exp(z.row(static_cast<Eigen::Index>(i)).dot(z.row(static_cast<Eigen::Index>(a))) / tau);
            if (y[a] == y[i]) ++np;
        }
        if (np == 0) continue;
        double sum = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            if (p == i || y[p] != y[i]) continue;
            const double num =
                std::exp(z.row(static_cast<Eigen::Index>(i)).dot(z.row(static_cast<Eigen::Index>(p))) / tau);
            sum += std::log(num / denom);
        }
        total += -sum / np;
        ++anchors;
    }
    return total / anchors;
}

// Zero biases (the init default) make dead-ReLU rows produce an exactly
// zero head output, where normalization has no derivative. Gradient checks
// run at a generic point instead.
inline void jitter_biases(closr::NetworkParameters& p, std::mt19937_64& rng, double scale = 0.3) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (std::size_t t = 0; t < p.tensors.size(); ++t)
        if (closr::NetworkParameters::is_bias(t))
            for (Eigen::Index i = 0; i < p.tensors[t].size(); ++i) p.tensors[t].data()[i] = u(rng);
}

// Central finite differences of f over every scalar parameter.
inline closr::NetworkParameters numeric_gradient(const closr::NetworkParameters& p,
                                                 const std::function<double(const closr::NetworkParameters&)>& f,
                                                 double h = 1e-5) {
    closr::NetworkParameters g = p.zeros_like();
    closr::NetworkParameters work = p;
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
        for (Eigen::Index i = 0; i < p.tensors[t].rows(); ++i) {
            for (Eigen::Index j = 0; j < p.tensors[t].cols(); ++j) {
                const double orig = p.tensors[t](i, j);
                work.tensors[t](i, j) = orig + h;
                const double up = f(work);
                work.tensors[t](i, j) = orig - h;
                const double down = f(work);
                work.tensors[t](i, j) = orig;
                g.tensors[t](i, j) = (up - down) / (2.0 * h);
            }
        }
    }
    return g;
}

// max |a-b| / max(floor, |a|, |b|) over all entries; the floor keeps entries
// that are zero up to rounding from dominating.
inline double max_rel_error(const closr::NetworkParameters& a, const closr::NetworkParameters& b,
                            double floor = 1e-5) {
    double worst = 0.0;
    for (std::size_t t = 0; t < a.tensors.size(); ++t)
        for (Eigen::Index i = 0; i < a.tensors[t].size(); ++i) {
            const double x = a.tensors[t].data()[i];
            const double y = b.tensors[t].data()[i];
            worst = std::max(worst, std::abs(x - y) / std::max({floor, std::abs(x), std::abs(y)}));
        }
    return worst;
}

// Textbook Adam on a single scalar.
struct ScalarAdam {
    double m = 0, v = 0;
    int t = 0;
    double step(double p, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        return p - lr * mh / (std::sqrt(vh) + eps);
    }
};

inline closr::Matrix random_unit_rows(std::mt19937_64& rng, int n, int d) {
    std::normal_distribution<double> g;
    closr::Matrix z(n, d);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) z(i, k) = g(rng);
        z.row(i).normalize();
    }
    return z;
}

inline closr::Matrix random_orthogonal(std::mt19937_64& rng, int d) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = g(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace oracle
