#include <gtest/gtest.h>

#include <random>

#include "closr/metrics.hpp"
#include "oracles.hpp"

using namespace closr;

TEST(Auroc, WorkedExample) { EXPECT_DOUBLE_EQ(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75); }

TEST(Auroc, PerfectSeparationAndAllTied) {
    EXPECT_EQ(auroc({0.1, 0.2, 0.9, 0.95}, {0, 0, 1, 1}), 1.0);
    EXPECT_EQ(auroc({3, 3, 3, 3, 3}, {0, 1, 0, 1, 1}), 0.5);
    EXPECT_THROW(auroc({1, 2}, {1, 1}), DataError);
    EXPECT_THROW(auroc({1, 2}, {0, 0}), DataError);
}

TEST(Auroc, EqualsPairCountingExactlyOnTiedInstances) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        const int m = std::uniform_int_distribution<int>(2, 200)(rng);
        const int levels = std::uniform_int_distribution<int>(1, 12)(rng);
        std::uniform_int_distribution<int> lvl(0, levels - 1);
        std::vector<double> s(static_cast<std::size_t>(m));
        std::vector<int> pos(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            s[static_cast<std::size_t>(i)] = 0.1 * lvl(rng);
            pos[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
        }
        pos[0] = 1;
        pos[1] = 0;
        EXPECT_EQ(auroc(s, pos), oracle::auroc_pairs(s, pos)) << "instance " << t;
    }
}

TEST(Auroc, InvariantUnderIncreasingTransform) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> s(300), ts(300);
    std::vector<int> pos(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
        pos[i] = static_cast<int>(rng() % 2);
        s[i] = g(rng) + pos[i];
        ts[i] = std::exp(3 * s[i]) + 5;
    }
    EXPECT_EQ(auroc(s, pos), auroc(ts, pos));
}

TEST(FprAtRecall, Examples) {
    EXPECT_EQ(fpr_at_recall({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 0.0);
    std::vector<double> s;
    std::vector<int> p;
    for (int i = 1; i <= 100; ++i) {
        s.push_back(i);
        p.push_back(1);
    }
    s.push_back(0.5);
    p.push_back(0);
    EXPECT_EQ(fpr_at_recall(s, p), 0.0);

    // identical distributions: FPR close to the recall target
    std::vector<double> dup;
    std::vector<int> lab;
    for (int i = 0; i < 1000; ++i) {
        dup.push_back(i);
        lab.push_back(1);
        dup.push_back(i);
        lab.push_back(0);
    }
    EXPECT_NEAR(fpr_at_recall(dup, lab), 0.95, 1e-3);
}

TEST(FprAtRecall, MatchesExhaustiveThresholdScan) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const int m = std::uniform_int_distribution<int>(2, 150)(rng);
        std::normal_distribution<double> g;
        std::vector<double> s(static_cast<std::size_t>(m));
        std::vector<int> pos(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            pos[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
            s[static_cast<std::size_t>(i)] = std::round(4 * (g(rng) + pos[static_cast<std::size_t>(i)])) / 4;
        }
        pos[0] = 1;
        pos[1] = 0;
        EXPECT_EQ(fpr_at_recall(s, pos, 0.95), oracle::fpr_scan(s, pos, 0.95)) << "instance " << t;
    }
}

TEST(FprAtRecall, MonotoneInRecallTarget) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    std::vector<double> s(400);
    std::vector<int> pos(400);
    for (std::size_t i = 0; i < s.size(); ++i) {
        pos[i] = static_cast<int>(rng() % 2);
        s[i] = g(rng) + 0.7 * pos[i];
    }
    double prev = 0.0;
    for (double r = 0.05; r <= 1.0 + 1e-12; r += 0.05) {
        const double f = fpr_at_recall(s, pos, std::min(r, 1.0));
        EXPECT_GE(f, prev);
        prev = f;
    }
}

TEST(PrAuc, PerfectSingleAndPrevalenceBaseline) {
    EXPECT_EQ(pr_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
    EXPECT_EQ(pr_auc({0.9, 0.2, 0.3, 0.1}, {1, 0, 0, 0}), 1.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U;
    std::vector<double> s(200000);
    std::vector<int> pos(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = U(rng);
        pos[i] = U(rng) < 0.2 ? 1 : 0;
    }
    EXPECT_NEAR(pr_auc(s, pos), 0.2, 0.01);
    EXPECT_THROW(pr_auc({1, 2}, {0, 0}), DataError);
}

TEST(ClosedSetReport, PerfectAndConstantPredictions) {
    const auto r = closed_set_report({0, 1, 2, 1}, {0, 1, 2, 1});
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.macro_f1, 1.0);
    const auto c = closed_set_report({0, 0, 0, 0}, {0, 1, 0, 1});
    EXPECT_EQ(c.accuracy, 0.5);
    EXPECT_EQ(c.per_class[1].precision, 0.0);
    EXPECT_THROW(closed_set_report({}, {}), DataError);
}

TEST(ClosedSetReport, ThreeClassConfusionMatrix) {
    // rows truth, cols predicted:
    //        0  1  2
    //   0 [  5  1  0 ]
    //   1 [  2  3  1 ]
    //   2 [  0  1  4 ]
    const int cm[3][3] = {{5, 1, 0}, {2, 3, 1}, {0, 1, 4}};
    std::vector<int> truth, pred;
    for (int t = 0; t < 3; ++t)
        for (int p = 0; p < 3; ++p)
            for (int k = 0; k < cm[t][p]; ++k) {
                truth.push_back(t);
                pred.push_back(p);
            }
    const auto r = closed_set_report(pred, truth);
    const double n = 17;
    EXPECT_DOUBLE_EQ(r.accuracy, 12 / n);
    const double prec[3] = {5.0 / 7, 3.0 / 5, 4.0 / 5};
    const double rec[3] = {5.0 / 6, 3.0 / 6, 4.0 / 5};
    const double fpr[3] = {2.0 / 11, 2.0 / 11, 1.0 / 12};
    double mf1 = 0;
    for (int c = 0; c < 3; ++c) {
        EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(c)].precision, prec[c]);
        EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(c)].recall, rec[c]);
        EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(c)].fp_rate, fpr[c]);
        const double f1 = 2 * prec[c] * rec[c] / (prec[c] + rec[c]);
        EXPECT_NEAR(r.per_class[static_cast<std::size_t>(c)].f1, f1, 1e-15);
        mf1 += f1 / 3;
    }
    EXPECT_NEAR(r.macro_f1, mf1, 1e-15);
    EXPECT_NEAR(r.macro_precision, (prec[0] + prec[1] + prec[2]) / 3, 1e-15);
}

TEST(OpenSetMetrics, ProductIdentityAndExamples) {
    const auto perfect = open_set_metrics({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}, {0, 1}, {0, 1});
    EXPECT_EQ(perfect.open_auc, 1.0);
    const auto zero = open_set_metrics({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}, {1, 0}, {0, 1});
    EXPECT_EQ(zero.open_auc, 0.0);
    EXPECT_NEAR(0.995276 * 0.974022, 0.969420, 5e-5);  // reference figures, to 4 d.p.
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    for (int t = 0; t < 50; ++t) {
        std::vector<double> s(60);
        std::vector<int> unk(60), cp(40), ct(40);
        for (std::size_t i = 0; i < s.size(); ++i) {
            unk[i] = i < 20 ? 1 : 0;
            s[i] = g(rng) + unk[i];
        }
        for (std::size_t i = 0; i < cp.size(); ++i) {
            ct[i] = static_cast<int>(rng() % 3);
            cp[i] = rng() % 4 == 0 ? static_cast<int>(rng() % 3) : ct[i];
        }
        const auto m = open_set_metrics(s, unk, cp, ct);
        EXPECT_NEAR(m.open_auc, m.closed_accuracy * m.open_set_auc, 1e-12);
        EXPECT_GE(m.open_set_auc, 0.0);
        EXPECT_LE(m.open_set_auc, 1.0);
    }
    EXPECT_THROW(open_set_metrics({1, 2}, {0, 0}, {0}, {0}), DataError);
}

TEST(NormalizedRank, RankOneFullRankAndZero) {
    Matrix same(6, 8);
    for (int i = 0; i < 6; ++i) same.row(i) = Eigen::RowVectorXd::LinSpaced(8, 1, 8).normalized();
    EXPECT_DOUBLE_EQ(normalized_rank(same).normalized, 1.0 / 8);
    const Matrix eye = Matrix::Identity(8, 8);
    EXPECT_DOUBLE_EQ(normalized_rank(eye).normalized, 1.0);
    const auto z = normalized_rank(Matrix::Zero(4, 8));
    EXPECT_TRUE(z.zero_matrix);
    EXPECT_EQ(z.rank, 0);
    EXPECT_THROW(normalized_rank(Matrix(0, 3)), DataError);
}
