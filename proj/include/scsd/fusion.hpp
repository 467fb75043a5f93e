#pragma once

#include <optional>
#include <span>
#include <vector>

#include "scsd/diffcore.hpp"
#include "scsd/types.hpp"

// Label-correlation-guided view weighting and decision fusion.

namespace scsd::fusion {

inline constexpr Real kCorrelationEps = Real(1e-8);

enum class CorrelationSource {
    /// Training labels with unobserved entries zero-filled.
    kMaskedLabels,
    /// Conditional frequency counted only over rows where the conditioned-on
    /// label is observed.
    kObservedPairs,
};

/// S_ij = (Y_:i . Y_:j) / (Y_:i . Y_:i + eps) for any real-valued n x c matrix.
Matrix conditional_correlation(const Matrix& values);

/// Global label correlation from the training split. Labels are multiplied
/// by the label mask first, so unobserved entries never contribute.
Matrix global_label_correlation(const BinaryMatrix& labels, const BinaryMatrix& label_mask,
                                CorrelationSource source = CorrelationSource::kMaskedLabels);

/// Correlation of one view's batch predictions. `predictions` holds only the
/// rows where the view is observed (masked rows would contribute zeros).
Matrix batch_prediction_correlation(const Matrix& predictions);

/// Row-normalized symmetrization rownorm((S + S^T) / 2); all-zero rows stay zero.
Matrix normalize_correlation(const Matrix& s);

/// q_v = -||S_v_norm - S_norm||_F for each view.
std::vector<Real> quality_scores(const std::vector<Matrix>& view_norm, const Matrix& global_norm);

/// w_iv = exp(q_v / tau) W_iv / sum_u exp(q_u / tau) W_iu.
/// Throws ContractError for a row with no observed view.
Matrix view_weights(std::span<const Real> quality, const BinaryMatrix& view_mask, Real tau);

struct QualityWeights {
    std::vector<Real> quality;
    Matrix weights;
};

QualityWeights quality_and_weights(const std::vector<Matrix>& view_norm,
                                   const Matrix& global_norm, const BinaryMatrix& view_mask,
                                   Real tau);

/// P_i = sum_v w_iv P_v,i. Each entry of view_predictions is n x c with
/// arbitrary content on rows where the weight is zero.
Matrix fuse(const std::vector<Matrix>& view_predictions, const Matrix& weights);

/// P_i = sum_v P_v,i W_iv / sum_v W_iv.
Matrix masked_average_fuse(const std::vector<Matrix>& view_predictions,
                           const BinaryMatrix& view_mask);

/// Uniform weights over observed views, for the masked-average ablation.
Matrix average_weights(const BinaryMatrix& view_mask);

/// Tape version of fuse: weights are constants, so the gradient reaches
/// each view prediction only through the convex combination.
diff::Tensor fuse(diff::Tape& tape, const std::vector<diff::Tensor>& view_predictions,
                  const Matrix& weights);

/// Exponential moving average of per-view quality used at inference.
class QualityAverage {
public:
    explicit QualityAverage(Real decay = Real(0.9)) : decay_(decay) {}

    /// Views flagged absent keep their previous average. The first
    /// observation of a view initializes its average directly.
    void update(std::span<const Real> quality, const std::vector<bool>& present);

    bool ready() const { return !values_.empty(); }
    const std::vector<Real>& values() const { return values_; }
    void set_values(std::vector<Real> values);

private:
    Real decay_;
    std::vector<Real> values_;
    std::vector<bool> seen_;
};

}  // namespace scsd::fusion
