#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "scsd/dataset.hpp"
#include "scsd/diffcore.hpp"
#include "scsd/network.hpp"

namespace scsd::loss {

/// Scalar tensor plus the denominator it was normalized by.
struct MaskedMean {
    diff::Tensor value;
    double normalizer = 0.0;
};

/// Sum over reconstructions of ||X_hat^(j,v)_i - X^(j)_i||^2 divided by the
/// number of reconstructed (i, j, v) rows. Zero (with a warning) when the
/// batch has no jointly observed pair.
MaskedMean reconstruction_loss(diff::Tape& tape, const std::vector<nn::Reconstruction>& recs,
                               const data::Batch& batch);

/// -sum [Y ln P + (1 - Y) ln(1 - P)] G / sum G. P is clamped into the
/// probability interval first. Zero (with a warning) when sum G = 0.
MaskedMean masked_bce(diff::Tape& tape, const diff::Tensor& p, const Matrix& y,
                      const BinaryMatrix& g);

/// p ln(p / q) + (1 - p) ln((1 - p) / (1 - q)), teacher p and student q.
Real binary_kl(Real p, Real q);

/// Elementwise binary KL of two equally shaped tensors, as a tensor.
diff::Tensor binary_kl(diff::Tape& tape, const diff::Tensor& teacher, const diff::Tensor& student);

struct DistillationOptions {
    Real lambda = Real(0.1);
    /// false drops the KL part and keeps the (1 - lambda) weighted BCE.
    bool use_kl = true;
};

/// Mean over observed (i, v) of
///   lambda * mean_j KL(sg[P_ij] || P^(v)_ij) + (1 - lambda) * BCE_row(P^(v)_i, Y_i),
/// where BCE_row is the label-masked mean over the row's observed labels.
/// `fused` covers every batch row; `views[v].predictions` only the rows
/// listed in `views[v].rows`.
MaskedMean distillation_loss(diff::Tape& tape, const diff::Tensor& fused,
                             const std::vector<nn::ViewForward>& views, const data::Batch& batch,
                             const DistillationOptions& options);

/// Sum over observed (i, v) of the per-sample codebook objective, divided by
/// the number of observed (i, v) pairs.
MaskedMean vq_batch_loss(diff::Tape& tape, const std::vector<nn::ViewForward>& views,
                         std::size_t groups);

struct LossParts {
    /// Undefined tensors count as zero (terms removed by an ablation).
    MaskedMean l_c;
    MaskedMean l_dis;
    MaskedMean l_rec;
    MaskedMean l_vq;
};

struct LossReport {
    double l_c = 0.0;
    double l_dis = 0.0;
    double l_rec = 0.0;
    double l_vq = 0.0;
    double total = 0.0;
    double n_c = 0.0;
    double n_dis = 0.0;
    double n_rec = 0.0;
    double n_vq = 0.0;
    diff::Tensor total_tensor;
};

/// L = L_c + L_dis + alpha * L_rec + L_vq. Throws NumericError naming the
/// first non-finite term.
LossReport total_loss(diff::Tape& tape, const LossParts& parts, Real alpha);

}  // namespace scsd::loss
