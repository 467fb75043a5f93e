#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "scsd/types.hpp"

// Multi-label evaluation metrics, all reported so that larger is better.
// Rankings sort scores in descending order; equal scores are ordered by
// ascending label index.

namespace scsd::metrics {

struct MetricReport {
    double ap = 0.0;
    double one_minus_hl = 0.0;
    double one_minus_rl = 0.0;
    double auc = 0.0;
    double one_minus_oe = 0.0;
    double one_minus_cov = 0.0;
    std::size_t n_eval = 0;

    /// (name, value) pairs in a fixed order.
    std::vector<std::pair<std::string, double>> items() const;
};

/// Sample-wise average precision over samples with at least one positive.
double average_precision(const Matrix& scores, const BinaryMatrix& labels);
/// 1 - fraction of entries where (score >= threshold) != label.
double hamming(const Matrix& scores, const BinaryMatrix& labels, double threshold = 0.5);
/// 1 - mean fraction of mis-ordered (positive, negative) pairs; ties count 1/2.
double ranking_loss(const Matrix& scores, const BinaryMatrix& labels);
/// Macro average over labels with both classes present of the pairwise AUC.
double auc(const Matrix& scores, const BinaryMatrix& labels);
/// 1 - fraction of samples whose top-ranked label is negative.
double one_error(const Matrix& scores, const BinaryMatrix& labels);
/// 1 - mean of (deepest positive rank - 1) / c.
double coverage(const Matrix& scores, const BinaryMatrix& labels);

/// All six metrics. Throws MetricError if any metric has no eligible sample.
MetricReport evaluate_all(const Matrix& scores, const BinaryMatrix& labels);

/// Label order of one score row under the shared ranking convention.
std::vector<std::size_t> rank_order(const Matrix& scores, Eigen::Index row);

}  // namespace scsd::metrics
