#include <gtest/gtest.h>

#include <cmath>

#include "scsd/errors.hpp"
#include "scsd/metrics.hpp"
#include "support.hpp"

namespace scsd {
namespace {

namespace oracle = testing::oracle;

Matrix row(std::initializer_list<Real> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index j = 0;
    for (Real x : v) m(0, j++) = x;
    return m;
}

BinaryMatrix brow(std::initializer_list<int> v) {
    BinaryMatrix m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index j = 0;
    for (int x : v) m(0, j++) = static_cast<std::uint8_t>(x);
    return m;
}

// Scores drawn from a small grid so ties are frequent.
Matrix tied_scores(std::size_t n, std::size_t c, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> level(0, 4);
    Matrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = static_cast<Real>(level(rng)) / 4;
    return s;
}

TEST(AveragePrecision, HandCases) {
    EXPECT_NEAR(metrics::average_precision(row({0.9, 0.8, 0.3, 0.1}), brow({1, 0, 1, 0})),
                (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
    EXPECT_NEAR(metrics::average_precision(row({0.9, 0.8, 0.3, 0.1}), brow({1, 0, 1, 0})), 0.8333,
                1e-4);
    EXPECT_DOUBLE_EQ(metrics::average_precision(row({0.4, 0.3, 0.2, 0.1}), brow({0, 0, 0, 1})),
                     0.25);
    EXPECT_DOUBLE_EQ(metrics::average_precision(row({0.9, 0.8, 0.1}), brow({1, 1, 0})), 1.0);
    EXPECT_THROW(metrics::average_precision(row({0.5, 0.5}), brow({0, 0})), MetricError);
}

TEST(Hamming, HandCases) {
    Matrix s(2, 2);
    s << 0.9, 0.1, 0.6, 0.4;
    BinaryMatrix y(2, 2);
    y << 1, 0, 1, 0;
    EXPECT_DOUBLE_EQ(metrics::hamming(s, y), 1.0);
    y << 1, 1, 0, 0;
    EXPECT_DOUBLE_EQ(metrics::hamming(s, y), 0.5);
    y << 0, 1, 0, 1;
    EXPECT_DOUBLE_EQ(metrics::hamming(s, y), 0.0);
    EXPECT_DOUBLE_EQ(metrics::hamming(row({0.5}), brow({1})), 1.0);
}

TEST(RankingLoss, HandCases) {
    EXPECT_DOUBLE_EQ(metrics::ranking_loss(row({0.9, 0.8, 0.3, 0.1}), brow({1, 0, 1, 0})), 0.75);
    EXPECT_DOUBLE_EQ(metrics::ranking_loss(row({0.9, 0.1}), brow({1, 0})), 1.0);
    EXPECT_DOUBLE_EQ(metrics::ranking_loss(row({0.5, 0.5, 0.5}), brow({1, 0, 1})), 0.5);
    EXPECT_THROW(metrics::ranking_loss(row({0.5, 0.2}), brow({1, 1})), MetricError);
}

TEST(Auc, HandCases) {
    Matrix s(4, 1);
    s << 0.1, 0.9, 0.5, 0.4;
    BinaryMatrix y(4, 1);
    y << 0, 1, 1, 0;
    EXPECT_DOUBLE_EQ(metrics::auc(s, y), 1.0);
    BinaryMatrix all_pos = BinaryMatrix::Ones(4, 1);
    EXPECT_THROW(metrics::auc(s, all_pos), MetricError);
}

TEST(Auc, FlippedLabelsSumToOne) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix s = tied_scores(8, 3, rng);
        BinaryMatrix y = testing::random_binary(8, 3, rng);
        for (Eigen::Index j = 0; j < 3; ++j) {
            y(0, j) = 1;
            y(1, j) = 0;
        }
        const BinaryMatrix flipped = (BinaryMatrix::Ones(8, 3) - y);
        EXPECT_NEAR(metrics::auc(s, y) + metrics::auc(s, flipped), 1.0, 1e-12);
    }
}

TEST(OneError, HandCases) {
    Matrix s(2, 3);
    s << 0.9, 0.2, 0.1, 0.3, 0.8, 0.1;
    BinaryMatrix y(2, 3);
    y << 1, 0, 0, 1, 0, 0;
    EXPECT_DOUBLE_EQ(metrics::one_error(s, y), 0.5);
    y << 1, 0, 0, 0, 1, 0;
    EXPECT_DOUBLE_EQ(metrics::one_error(s, y), 1.0);
    EXPECT_DOUBLE_EQ(metrics::one_error(row({0.5, 0.5}), brow({1, 0})), 1.0);
    EXPECT_DOUBLE_EQ(metrics::one_error(row({0.5, 0.5}), brow({0, 1})), 0.0);
}

TEST(Coverage, HandCases) {
    EXPECT_DOUBLE_EQ(metrics::coverage(row({0.9, 0.8, 0.3, 0.1}), brow({1, 0, 1, 0})), 0.5);
    EXPECT_DOUBLE_EQ(metrics::coverage(row({0.9, 0.8, 0.3, 0.1}), brow({1, 0, 0, 0})), 1.0);
    // Positives at the bottom of three labels: deepest rank 3, Cov = 2/3.
    EXPECT_NEAR(metrics::coverage(row({0.9, 0.2, 0.1}), brow({0, 1, 1})), 1.0 - 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(metrics::coverage(row({0.9, 0.2, 0.1}), brow({0, 1, 1})),
                oracle::coverage(row({0.9, 0.2, 0.1}), brow({0, 1, 1})), 0.0);
}

TEST(Metrics, ShapeMismatchIsDimensionError) {
    EXPECT_THROW(metrics::average_precision(row({0.1, 0.2}), brow({1})), DimensionError);
}

TEST(Metrics, OracleEquivalenceOnRandomInstances) {
    std::mt19937_64 rng(2);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix s = trial % 2 ? tied_scores(6, 5, rng) : testing::random_matrix(6, 5, rng);
        BinaryMatrix y = testing::random_binary(6, 5, rng, 0.4);
        y(0, 0) = 1;
        y(0, 1) = 0;
        y(1, 0) = 0;
        EXPECT_EQ(metrics::average_precision(s, y), oracle::average_precision(s, y));
        EXPECT_EQ(metrics::hamming(s, y), oracle::hamming(s, y, 0.5));
        EXPECT_EQ(metrics::ranking_loss(s, y), oracle::ranking_loss(s, y));
        EXPECT_EQ(metrics::auc(s, y), oracle::auc(s, y));
        EXPECT_EQ(metrics::one_error(s, y), oracle::one_error(s, y));
        EXPECT_EQ(metrics::coverage(s, y), oracle::coverage(s, y));
        ++checked;
    }
    EXPECT_EQ(checked, 200);
}

TEST(Metrics, InvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix s = tied_scores(6, 5, rng);
        BinaryMatrix y = testing::random_binary(6, 5, rng, 0.4);
        y(0, 0) = 1;
        y(0, 1) = 0;
        y(1, 0) = 0;
        // Scalar exp: a packet exp can split exact ties.
        const Matrix t = s.unaryExpr([](Real x) { return std::exp(3 * x + 1); });
        EXPECT_EQ(metrics::average_precision(s, y), metrics::average_precision(t, y));
        EXPECT_EQ(metrics::ranking_loss(s, y), metrics::ranking_loss(t, y));
        EXPECT_EQ(metrics::auc(s, y), metrics::auc(t, y));
        EXPECT_EQ(metrics::one_error(s, y), metrics::one_error(t, y));
        EXPECT_EQ(metrics::coverage(s, y), metrics::coverage(t, y));
    }
}

TEST(Metrics, EvaluateAllInUnitInterval) {
    std::mt19937_64 rng(4);
    const Matrix s = testing::random_matrix(30, 6, rng).array().abs().min(1.0).matrix();
    BinaryMatrix y = testing::random_binary(30, 6, rng, 0.4);
    y(0, 0) = 1;
    y(0, 1) = 0;
    y(1, 0) = 0;
    const auto r = metrics::evaluate_all(s, y);
    EXPECT_EQ(r.n_eval, 30u);
    for (const auto& [name, value] : r.items()) {
        EXPECT_GE(value, 0.0) << name;
        EXPECT_LE(value, 1.0) << name;
    }
    EXPECT_EQ(r.items().size(), 6u);
    EXPECT_EQ(r.items().front().first, "ap");
}

TEST(Metrics, RankOrderBreaksTiesByIndex) {
    const auto order = metrics::rank_order(row({0.2, 0.5, 0.5, 0.1}), 0);
    EXPECT_EQ(order, (std::vector<std::size_t>{1, 2, 0, 3}));
}

}  // namespace
}  // namespace scsd
