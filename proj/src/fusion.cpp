#include "scsd/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "scsd/errors.hpp"

namespace scsd::fusion {

Matrix conditional_correlation(const Matrix& values) {
    const Matrix gram = values.transpose() * values;
    Matrix s(gram.rows(), gram.cols());
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
        const Real denom = gram(i, i) + kCorrelationEps;
        for (Eigen::Index j = 0; j < gram.cols(); ++j) s(i, j) = gram(i, j) / denom;
    }
    return s;
}

Matrix global_label_correlation(const BinaryMatrix& labels, const BinaryMatrix& label_mask,
                                CorrelationSource source) {
    if (labels.rows() != label_mask.rows() || labels.cols() != label_mask.cols()) {
        throw DimensionError("labels and label mask differ in shape");
    }
    const Matrix y = (labels.array() * label_mask.array()).cast<Real>().matrix();
    if (source == CorrelationSource::kMaskedLabels) {
        return conditional_correlation(y);
    }
    const Matrix g = label_mask.cast<Real>();
    // Co-occurrence over rows where i is positive and j is observed.
    const Matrix joint = y.transpose() * y;
    const Matrix support = y.transpose() * g;
    Matrix s(joint.rows(), joint.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            s(i, j) = joint(i, j) / (support(i, j) + kCorrelationEps);
        }
    }
    return s;
}

Matrix batch_prediction_correlation(const Matrix& predictions) {
    return conditional_correlation(predictions);
}

Matrix normalize_correlation(const Matrix& s) {
    if (s.rows() != s.cols()) {
        throw DimensionError("correlation matrix must be square");
    }
    Matrix out = (s + s.transpose()) / Real(2);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const Real row = out.row(i).sum();
        if (row != Real(0)) out.row(i) /= row;
    }
    return out;
}

std::vector<Real> quality_scores(const std::vector<Matrix>& view_norm, const Matrix& global_norm) {
    std::vector<Real> q;
    q.reserve(view_norm.size());
    for (const Matrix& s : view_norm) {
        if (s.rows() != global_norm.rows() || s.cols() != global_norm.cols()) {
            throw DimensionError("view correlation and global correlation differ in shape");
        }
        q.push_back(-(s - global_norm).norm());
    }
    return q;
}

Matrix view_weights(std::span<const Real> quality, const BinaryMatrix& view_mask, Real tau) {
    if (!(tau > Real(0))) {
        throw ParameterError("temperature must be positive");
    }
    const auto m = static_cast<Eigen::Index>(quality.size());
    if (view_mask.cols() != m) {
        throw DimensionError("view mask width does not match the number of quality scores");
    }
    Matrix w = Matrix::Zero(view_mask.rows(), m);
    for (Eigen::Index i = 0; i < view_mask.rows(); ++i) {
        Real top = -std::numeric_limits<Real>::infinity();
        for (Eigen::Index v = 0; v < m; ++v) {
            if (view_mask(i, v)) top = std::max(top, quality[static_cast<std::size_t>(v)] / tau);
        }
        if (top == -std::numeric_limits<Real>::infinity()) {
            throw ContractError("sample " + std::to_string(i) + " has no observed view");
        }
        Real total = 0;
        for (Eigen::Index v = 0; v < m; ++v) {
            if (view_mask(i, v)) {
                w(i, v) = std::exp(quality[static_cast<std::size_t>(v)] / tau - top);
                total += w(i, v);
            }
        }
        w.row(i) /= total;
    }
    return w;
}

QualityWeights quality_and_weights(const std::vector<Matrix>& view_norm,
                                   const Matrix& global_norm, const BinaryMatrix& view_mask,
                                   Real tau) {
    QualityWeights out;
    out.quality = quality_scores(view_norm, global_norm);
    out.weights = view_weights(out.quality, view_mask, tau);
    return out;
}

Matrix fuse(const std::vector<Matrix>& view_predictions, const Matrix& weights) {
    if (view_predictions.empty() ||
        weights.cols() != static_cast<Eigen::Index>(view_predictions.size())) {
        throw DimensionError("fuse: one weight column per view required");
    }
    Matrix p = Matrix::Zero(weights.rows(), view_predictions.front().cols());
    for (std::size_t v = 0; v < view_predictions.size(); ++v) {
        const Matrix& pv = view_predictions[v];
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const Real w = weights(i, static_cast<Eigen::Index>(v));
            if (w != Real(0)) p.row(i) += w * pv.row(i);
        }
    }
    return p;
}

Matrix average_weights(const BinaryMatrix& view_mask) {
    Matrix w = view_mask.cast<Real>();
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const Real count = w.row(i).sum();
        if (count == Real(0)) {
            throw ContractError("sample " + std::to_string(i) + " has no observed view");
        }
        w.row(i) /= count;
    }
    return w;
}

Matrix masked_average_fuse(const std::vector<Matrix>& view_predictions,
                           const BinaryMatrix& view_mask) {
    if (view_mask.cols() != static_cast<Eigen::Index>(view_predictions.size())) {
        throw DimensionError("masked_average_fuse: one mask column per view required");
    }
    Matrix p = Matrix::Zero(view_mask.rows(), view_predictions.front().cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Real count = 0;
        for (std::size_t v = 0; v < view_predictions.size(); ++v) {
            if (view_mask(i, static_cast<Eigen::Index>(v))) {
                p.row(i) += view_predictions[v].row(i);
                count += Real(1);
            }
        }
        if (count == Real(0)) {
            throw ContractError("sample " + std::to_string(i) + " has no observed view");
        }
        p.row(i) /= count;
    }
    return p;
}

diff::Tensor fuse(diff::Tape& tape, const std::vector<diff::Tensor>& view_predictions,
                  const Matrix& weights) {
    if (view_predictions.size() != static_cast<std::size_t>(weights.cols())) {
        throw DimensionError("fuse: one weight column per view required");
    }
    diff::Tensor total;
    for (std::size_t v = 0; v < view_predictions.size(); ++v) {
        const diff::Tensor& pv = view_predictions[v];
        if (!pv.defined()) continue;
        Matrix w(pv.rows(), pv.cols());
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            w.row(i).setConstant(weights(i, static_cast<Eigen::Index>(v)));
        }
        const diff::Tensor term = tape.mul(pv, diff::Tensor::from_matrix(w));
        total = total.defined() ? tape.add(total, term) : term;
    }
    if (!total.defined()) {
        throw ContractError("fuse: no view predictions in batch");
    }
    return total;
}

void QualityAverage::update(std::span<const Real> quality, const std::vector<bool>& present) {
    if (quality.size() != present.size()) {
        throw DimensionError("quality and presence flags differ in length");
    }
    if (values_.empty()) {
        values_.assign(quality.size(), Real(0));
        seen_.assign(quality.size(), false);
    }
    if (values_.size() != quality.size()) {
        throw DimensionError("quality vector changed length");
    }
    for (std::size_t v = 0; v < quality.size(); ++v) {
        if (!present[v]) continue;
        values_[v] = seen_[v] ? decay_ * values_[v] + (Real(1) - decay_) * quality[v] : quality[v];
        seen_[v] = true;
    }
}

void QualityAverage::set_values(std::vector<Real> values) {
    seen_.assign(values.size(), true);
    values_ = std::move(values);
}

}  // namespace scsd::fusion
