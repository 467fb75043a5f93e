#include "scsd/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "scsd/errors.hpp"

namespace scsd::metrics {

namespace {

void check_shapes(const Matrix& scores, const BinaryMatrix& labels) {
    if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
        throw DimensionError("scores and labels differ in shape");
    }
    if (scores.rows() == 0 || scores.cols() == 0) {
        throw MetricError("empty score matrix");
    }
}

// Pair credit: 1 if the positive scores above the negative, 1/2 on ties.
double pair_credit(Real pos, Real neg) {
    if (pos > neg) return 1.0;
    if (pos == neg) return 0.5;
    return 0.0;
}

}  // namespace

std::vector<std::pair<std::string, double>> MetricReport::items() const {
    return {{"ap", ap},         {"one_minus_hl", one_minus_hl}, {"one_minus_rl", one_minus_rl},
            {"auc", auc},       {"one_minus_oe", one_minus_oe}, {"one_minus_cov", one_minus_cov}};
}

std::vector<std::size_t> rank_order(const Matrix& scores, Eigen::Index row) {
    std::vector<std::size_t> order(static_cast<std::size_t>(scores.cols()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores(row, static_cast<Eigen::Index>(a)) > scores(row, static_cast<Eigen::Index>(b));
    });
    return order;
}

double average_precision(const Matrix& scores, const BinaryMatrix& labels) {
    check_shapes(scores, labels);
    double total = 0.0;
    std::size_t eligible = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const auto order = rank_order(scores, i);
        double precision_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (labels(i, static_cast<Eigen::Index>(order[r]))) {
                ++hits;
                precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
            }
        }
        if (hits == 0) continue;
        total += precision_sum / static_cast<double>(hits);
        ++eligible;
    }
    if (eligible == 0) throw MetricError("average precision: no sample has a positive label");
    return total / static_cast<double>(eligible);
}

double hamming(const Matrix& scores, const BinaryMatrix& labels, double threshold) {
    check_shapes(scores, labels);
    std::size_t wrong = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        for (Eigen::Index j = 0; j < scores.cols(); ++j) {
            const bool predicted = static_cast<double>(scores(i, j)) >= threshold;
            if (predicted != (labels(i, j) != 0)) ++wrong;
        }
    }
    return 1.0 - static_cast<double>(wrong) / static_cast<double>(scores.size());
}

double ranking_loss(const Matrix& scores, const BinaryMatrix& labels) {
    check_shapes(scores, labels);
    double total = 0.0;
    std::size_t eligible = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        double ordered = 0.0;
        std::size_t pos = 0;
        std::size_t neg = 0;
        for (Eigen::Index a = 0; a < scores.cols(); ++a) {
            if (!labels(i, a)) {
                ++neg;
                continue;
            }
            ++pos;
            for (Eigen::Index b = 0; b < scores.cols(); ++b) {
                if (!labels(i, b)) ordered += pair_credit(scores(i, a), scores(i, b));
            }
        }
        if (pos == 0 || neg == 0) continue;
        const double pairs = static_cast<double>(pos * neg);
        total += (pairs - ordered) / pairs;
        ++eligible;
    }
    if (eligible == 0) {
        throw MetricError("ranking loss: no sample has both positive and negative labels");
    }
    return 1.0 - total / static_cast<double>(eligible);
}

double auc(const Matrix& scores, const BinaryMatrix& labels) {
    check_shapes(scores, labels);
    double total = 0.0;
    std::size_t eligible = 0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
        double ordered = 0.0;
        std::size_t pos = 0;
        std::size_t neg = 0;
        for (Eigen::Index a = 0; a < scores.rows(); ++a) {
            if (!labels(a, j)) {
                ++neg;
                continue;
            }
            ++pos;
            for (Eigen::Index b = 0; b < scores.rows(); ++b) {
                if (!labels(b, j)) ordered += pair_credit(scores(a, j), scores(b, j));
            }
        }
        if (pos == 0 || neg == 0) continue;
        total += ordered / static_cast<double>(pos * neg);
        ++eligible;
    }
    if (eligible == 0) throw MetricError("auc: no label has both classes present");
    return total / static_cast<double>(eligible);
}

double one_error(const Matrix& scores, const BinaryMatrix& labels) {
    check_shapes(scores, labels);
    std::size_t errors = 0;
    std::size_t eligible = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        if (labels.row(i).cast<int>().sum() == 0) continue;
        Eigen::Index top = 0;
        for (Eigen::Index j = 1; j < scores.cols(); ++j) {
            if (scores(i, j) > scores(i, top)) top = j;
        }
        if (!labels(i, top)) ++errors;
        ++eligible;
    }
    if (eligible == 0) throw MetricError("one error: no sample has a positive label");
    return 1.0 - static_cast<double>(errors) / static_cast<double>(eligible);
}

double coverage(const Matrix& scores, const BinaryMatrix& labels) {
    check_shapes(scores, labels);
    double total = 0.0;
    std::size_t eligible = 0;
    const auto c = static_cast<double>(scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const auto order = rank_order(scores, i);
        std::size_t deepest = 0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (labels(i, static_cast<Eigen::Index>(order[r]))) deepest = r + 1;
        }
        if (deepest == 0) continue;
        total += static_cast<double>(deepest - 1) / c;
        ++eligible;
    }
    if (eligible == 0) throw MetricError("coverage: no sample has a positive label");
    return 1.0 - total / static_cast<double>(eligible);
}

MetricReport evaluate_all(const Matrix& scores, const BinaryMatrix& labels) {
    MetricReport r;
    r.ap = average_precision(scores, labels);
    r.one_minus_hl = hamming(scores, labels);
    r.one_minus_rl = ranking_loss(scores, labels);
    r.auc = auc(scores, labels);
    r.one_minus_oe = one_error(scores, labels);
    r.one_minus_cov = coverage(scores, labels);
    r.n_eval = static_cast<std::size_t>(scores.rows());
    return r;
}

}  // namespace scsd::metrics
