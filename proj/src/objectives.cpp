#include "scsd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "scsd/errors.hpp"

namespace scsd::loss {

namespace {

using diff::Tensor;

Matrix rows_of(const Matrix& m, const IndexList& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

BinaryMatrix rows_of(const BinaryMatrix& m, const IndexList& rows) {
    BinaryMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

MaskedMean zero_mean(std::string_view what) {
    log_warning(std::string(what) + ": empty normalizer, term set to 0");
    return {Tensor::scalar(Real(0)), 0.0};
}

// Elementwise -[y ln p + (1 - y) ln(1 - p)] g, same shape as p.
Tensor bce_elements(diff::Tape& tape, const Tensor& p, const Matrix& y, const BinaryMatrix& g) {
    if (p.rank() != 2 || static_cast<Eigen::Index>(p.rows()) != y.rows() ||
        static_cast<Eigen::Index>(p.cols()) != y.cols() || y.rows() != g.rows() ||
        y.cols() != g.cols()) {
        throw DimensionError("bce: prediction, label and mask shapes differ");
    }
    const Matrix gm = g.cast<Real>();
    const Matrix pos = y.cwiseProduct(gm);
    const Matrix neg = (Matrix::Ones(y.rows(), y.cols()) - y).cwiseProduct(gm);
    const Tensor pc = tape.clamp(p, nn::kProbFloor, nn::kProbCeil);
    const Tensor lp = tape.log(pc);
    const Tensor lq = tape.log(tape.affine(pc, Real(-1), Real(1)));
    const Tensor sum = tape.add(tape.mul(lp, Tensor::from_matrix(pos)),
                                tape.mul(lq, Tensor::from_matrix(neg)));
    return tape.affine(sum, Real(-1), Real(0));
}

}  // namespace

MaskedMean reconstruction_loss(diff::Tape& tape, const std::vector<nn::Reconstruction>& recs,
                               const data::Batch& batch) {
    Tensor total;
    std::size_t count = 0;
    for (const nn::Reconstruction& rec : recs) {
        if (rec.rows.empty()) continue;
        const Matrix target = rows_of(batch.views[rec.target], rec.rows);
        if (static_cast<Eigen::Index>(rec.x_hat.cols()) != target.cols() ||
            rec.x_hat.rows() != rec.rows.size()) {
            throw DimensionError("reconstruction shape does not match its target view");
        }
        const Tensor residual = tape.sub(rec.x_hat, Tensor::from_matrix(target));
        const Tensor term = tape.sum(tape.square(residual));
        total = total.defined() ? tape.add(total, term) : term;
        count += rec.rows.size();
    }
    if (count == 0) return zero_mean("reconstruction loss");
    return {tape.affine(total, Real(1) / static_cast<Real>(count), Real(0)),
            static_cast<double>(count)};
}

MaskedMean masked_bce(diff::Tape& tape, const Tensor& p, const Matrix& y, const BinaryMatrix& g) {
    const Tensor elems = bce_elements(tape, p, y, g);
    const double observed = g.cast<double>().sum();
    if (observed == 0.0) return zero_mean("masked bce");
    return {tape.affine(tape.sum(elems), Real(1) / static_cast<Real>(observed), Real(0)),
            observed};
}

Real binary_kl(Real p, Real q) {
    return p * (std::log(p) - std::log(q)) +
           (Real(1) - p) * (std::log(Real(1) - p) - std::log(Real(1) - q));
}

Tensor binary_kl(diff::Tape& tape, const Tensor& teacher, const Tensor& student) {
    if (teacher.shape() != student.shape()) {
        throw DimensionError("binary_kl: teacher and student shapes differ");
    }
    std::vector<Real> p(teacher.values().begin(), teacher.values().end());
    std::vector<Real> teacher_part(p.size());
    std::vector<Real> pos(p.size());
    std::vector<Real> neg(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Real pi = std::clamp(p[i], nn::kProbFloor, nn::kProbCeil);
        pos[i] = pi;
        neg[i] = Real(1) - pi;
        teacher_part[i] = pi * std::log(pi) + (Real(1) - pi) * std::log(Real(1) - pi);
    }
    const Tensor q = tape.clamp(student, nn::kProbFloor, nn::kProbCeil);
    const Tensor cross =
        tape.add(tape.mul(tape.log(q), Tensor::from_values(student.shape(), std::move(pos))),
                 tape.mul(tape.log(tape.affine(q, Real(-1), Real(1))),
                          Tensor::from_values(student.shape(), std::move(neg))));
    return tape.sub(Tensor::from_values(student.shape(), std::move(teacher_part)), cross);
}

MaskedMean distillation_loss(diff::Tape& tape, const Tensor& fused,
                             const std::vector<nn::ViewForward>& views, const data::Batch& batch,
                             const DistillationOptions& options) {
    if (options.lambda < Real(0) || options.lambda > Real(1)) {
        throw ParameterError("lambda must lie in [0, 1]");
    }
    const Real lambda = options.use_kl ? options.lambda : Real(0);
    const Real bce_weight = Real(1) - options.lambda;
    Tensor total;
    std::size_t count = 0;
    std::optional<Tensor> teacher_all;
    for (const nn::ViewForward& vf : views) {
        if (vf.rows.empty()) continue;
        const Tensor& pv = vf.predictions;
        const auto c = static_cast<Real>(pv.cols());
        Tensor row_loss;
        if (lambda != Real(0)) {
            if (!teacher_all) teacher_all = tape.stop_gradient(fused);
            const Tensor teacher = tape.gather_rows(*teacher_all, vf.rows);
            const Tensor kl = tape.affine(tape.row_sum(binary_kl(tape, teacher, pv)),
                                          lambda / c, Real(0));
            row_loss = kl;
        }
        if (bce_weight != Real(0)) {
            const BinaryMatrix g = rows_of(batch.label_mask, vf.rows);
            const Matrix y = rows_of(batch.labels, vf.rows);
            std::vector<Real> scale(vf.rows.size());
            for (std::size_t r = 0; r < vf.rows.size(); ++r) {
                const auto observed = static_cast<Real>(
                    g.row(static_cast<Eigen::Index>(r)).cast<int>().sum());
                scale[r] = observed > Real(0) ? bce_weight / observed : Real(0);
            }
            const Tensor bce = tape.mul(tape.row_sum(bce_elements(tape, pv, y, g)),
                                        Tensor::from_values({vf.rows.size(), 1}, std::move(scale)));
            row_loss = row_loss.defined() ? tape.add(row_loss, bce) : bce;
        }
        count += vf.rows.size();
        if (!row_loss.defined()) continue;
        const Tensor term = tape.sum(row_loss);
        total = total.defined() ? tape.add(total, term) : term;
    }
    if (count == 0) return zero_mean("distillation loss");
    if (!total.defined()) return {Tensor::scalar(Real(0)), static_cast<double>(count)};
    return {tape.affine(total, Real(1) / static_cast<Real>(count), Real(0)),
            static_cast<double>(count)};
}

MaskedMean vq_batch_loss(diff::Tape& tape, const std::vector<nn::ViewForward>& views,
                         std::size_t groups) {
    Tensor total;
    std::size_t count = 0;
    for (const nn::ViewForward& vf : views) {
        if (vf.rows.empty()) continue;
        if (!vf.quant) throw StateError("vq loss requested for an unquantized view");
        const Tensor term =
            tape.sum(vq::vq_loss(tape, vf.quant->z_segments, vf.quant->code_segments, groups));
        total = total.defined() ? tape.add(total, term) : term;
        count += vf.rows.size();
    }
    if (count == 0) return zero_mean("vq loss");
    return {tape.affine(total, Real(1) / static_cast<Real>(count), Real(0)),
            static_cast<double>(count)};
}

LossReport total_loss(diff::Tape& tape, const LossParts& parts, Real alpha) {
    if (alpha < Real(0)) throw ParameterError("alpha must be non-negative");
    LossReport report;
    struct Term {
        const char* name;
        const MaskedMean* part;
        double* value;
        double* count;
        Real weight;
    };
    const Term terms[] = {
        {"l_c", &parts.l_c, &report.l_c, &report.n_c, Real(1)},
        {"l_dis", &parts.l_dis, &report.l_dis, &report.n_dis, Real(1)},
        {"l_rec", &parts.l_rec, &report.l_rec, &report.n_rec, alpha},
        {"l_vq", &parts.l_vq, &report.l_vq, &report.n_vq, Real(1)},
    };
    Tensor total;
    for (const Term& t : terms) {
        if (!t.part->value.defined()) continue;
        const Real v = t.part->value.item();
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite loss term ") + t.name);
        }
        *t.value = static_cast<double>(v);
        *t.count = t.part->normalizer;
        const Tensor scaled =
            t.weight == Real(1) ? t.part->value : tape.affine(t.part->value, t.weight, Real(0));
        total = total.defined() ? tape.add(total, scaled) : scaled;
    }
    if (!total.defined()) total = Tensor::scalar(Real(0));
    report.total = static_cast<double>(total.item());
    if (!std::isfinite(report.total)) throw NumericError("non-finite loss term total");
    report.total_tensor = total;
    return report;
}

}  // namespace scsd::loss
