#include "scsd/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace scsd {

namespace {
bool g_warnings_muted = false;
}

void log_warning(std::string_view message) {
    if (!g_warnings_muted) {
        std::cerr << "warning: " << message << '\n';
    }
}

bool set_warnings_muted(bool muted) {
    const bool previous = g_warnings_muted;
    g_warnings_muted = muted;
    return previous;
}

}  // namespace scsd

namespace scsd::diff {

namespace {

// c[n x q] += a[n x p] * b[p x q], all row-major. Every output element is
// summed over k in ascending order whatever the buffer alignment, so a
// row's result does not depend on where it sits in the batch.
void gemm_accumulate(const Real* a, const Real* b, Real* c, std::size_t n, std::size_t p,
                     std::size_t q) {
    constexpr std::size_t kRows = 4;
    std::size_t i = 0;
    for (; i + kRows <= n; i += kRows) {
        Real* __restrict c0 = c + i * q;
        Real* __restrict c1 = c0 + q;
        Real* __restrict c2 = c1 + q;
        Real* __restrict c3 = c2 + q;
        const Real* a0 = a + i * p;
        for (std::size_t k = 0; k < p; ++k) {
            const Real* __restrict bk = b + k * q;
            const Real x0 = a0[k], x1 = a0[p + k], x2 = a0[2 * p + k], x3 = a0[3 * p + k];
            for (std::size_t j = 0; j < q; ++j) {
                const Real bj = bk[j];
                c0[j] += x0 * bj;
                c1[j] += x1 * bj;
                c2[j] += x2 * bj;
                c3[j] += x3 * bj;
            }
        }
    }
    for (; i < n; ++i) {
        Real* __restrict ci = c + i * q;
        for (std::size_t k = 0; k < p; ++k) {
            const Real* __restrict bk = b + k * q;
            const Real x = a[i * p + k];
            for (std::size_t j = 0; j < q; ++j) ci[j] += x * bk[j];
        }
    }
}

std::vector<Real> transposed(const Real* x, std::size_t rows, std::size_t cols) {
    std::vector<Real> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = x[r * cols + c];
    }
    return t;
}

std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << (i ? "x" : "") << s[i];
    }
    os << ']';
    return os.str();
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                             shape_string(t.shape()));
    }
}

/// Gradient buffer of n, allocated on first use; null when n needs no gradient.
Real* grad_buffer(Node* n) {
    if (!n->requires_grad) {
        return nullptr;
    }
    if (n->grad.empty()) {
        n->grad.assign(n->value.size(), Real(0));
    }
    return n->grad.data();
}

enum BinaryOp { kAdd = 0, kSub = 1, kMul = 2 };

}  // namespace

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<Real> v(shape_size(shape), Real(0));
    return from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<Real> values, bool requires_grad) {
    if (values.size() != shape_size(shape)) {
        throw DimensionError("tensor value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_string(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_matrix(const Matrix& m, bool requires_grad) {
    std::vector<Real> v(m.data(), m.data() + m.size());
    return from_values({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                       std::move(v), requires_grad);
}

Tensor Tensor::scalar(Real v) { return from_values({}, {v}); }

Tensor Tensor::clone() const {
    if (!node_) return {};
    return Tensor(std::make_shared<Node>(*node_));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) {
        throw DimensionError("rows() on non-matrix shape " + shape_string(shape()));
    }
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) {
        throw DimensionError("cols() on non-matrix shape " + shape_string(shape()));
    }
    return node_->shape[1];
}

Real Tensor::item() const {
    if (size() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    }
    return node_->value[0];
}

Matrix Tensor::to_matrix() const {
    return Eigen::Map<const Matrix>(node_->value.data(), static_cast<Eigen::Index>(rows()),
                    static_cast<Eigen::Index>(cols()));
}

void Tensor::zero_grad() {
    if (node_->requires_grad) {
        node_->grad.assign(node_->value.size(), Real(0));
    } else {
        node_->grad.clear();
    }
}

// ---------------------------------------------------------------------------
// FreezeTrace

void FreezeTrace::start_record() {
    mode_ = Mode::kRecord;
    values_.clear();
    indices_.clear();
    value_cursor_ = index_cursor_ = 0;
}

void FreezeTrace::start_replay() {
    mode_ = Mode::kReplay;
    value_cursor_ = index_cursor_ = 0;
}

std::vector<Real> FreezeTrace::pass_values(std::span<const Real> current) {
    if (mode_ == Mode::kRecord) {
        values_.emplace_back(current.begin(), current.end());
        return values_.back();
    }
    if (value_cursor_ >= values_.size() || values_[value_cursor_].size() != current.size()) {
        throw StateError("freeze trace replay diverged from the recorded graph");
    }
    return values_[value_cursor_++];
}

std::vector<std::size_t> FreezeTrace::pass_indices(std::vector<std::size_t> current) {
    if (mode_ == Mode::kRecord) {
        indices_.push_back(current);
        return current;
    }
    if (index_cursor_ >= indices_.size() || indices_[index_cursor_].size() != current.size()) {
        throw StateError("freeze trace replay diverged from the recorded indices");
    }
    return indices_[index_cursor_++];
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::make_output(Shape shape, std::vector<Real> value,
                         std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
    auto out = std::make_shared<Node>();
    out->shape = std::move(shape);
    out->value = std::move(value);
    out->is_leaf = false;
    bool needs_grad = false;
    for (const Tensor* t : inputs) {
        needs_grad = needs_grad || t->requires_grad();
    }
    if (grad_enabled_ && needs_grad) {
        out->requires_grad = true;
        Record rec;
        for (const Tensor* t : inputs) {
            rec.inputs.push_back(t->node());
        }
        rec.output = out;
        rec.backward = std::move(fn);
        records_.push_back(std::move(rec));
    }
    return Tensor(std::move(out));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                             " . " + shape_string(b.shape()));
    }
    const std::size_t n = a.rows();
    const std::size_t p = a.cols();
    const std::size_t q = b.cols();
    std::vector<Real> out(n * q, Real(0));
    gemm_accumulate(a.values().data(), b.values().data(), out.data(), n, p, q);

    Node* an = a.node().get();
    Node* bn = b.node().get();
    return make_output({n, q}, std::move(out), {&a, &b}, [an, bn, n, p, q](const Node& o) {
        const Real* g = o.grad.data();
        if (Real* ga = grad_buffer(an)) {
            const std::vector<Real> bt = transposed(bn->value.data(), p, q);
            gemm_accumulate(g, bt.data(), ga, n, q, p);
        }
        if (Real* gb = grad_buffer(bn)) {
            const std::vector<Real> at = transposed(an->value.data(), n, p);
            gemm_accumulate(at.data(), g, gb, p, n, q);
        }
    });
}

Tensor Tape::elementwise_binary(const Tensor& a, const Tensor& b, int op) {
    const bool scalar_b = b.size() == 1 && a.size() != 1;
    if (!scalar_b && a.shape() != b.shape()) {
        throw DimensionError("elementwise: shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    const std::size_t len = a.size();
    std::vector<Real> out(len);
    const Real* av = a.values().data();
    const Real* bv = b.values().data();
    for (std::size_t i = 0; i < len; ++i) {
        const Real bi = scalar_b ? bv[0] : bv[i];
        switch (op) {
            case kAdd: out[i] = av[i] + bi; break;
            case kSub: out[i] = av[i] - bi; break;
            default: out[i] = av[i] * bi; break;
        }
    }
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return make_output(a.shape(), std::move(out), {&a, &b},
                       [an, bn, op, scalar_b, len](const Node& o) {
                           const Real* g = o.grad.data();
                           if (Real* ga = grad_buffer(an)) {
                               for (std::size_t i = 0; i < len; ++i) {
                                   const Real bi = scalar_b ? bn->value[0] : bn->value[i];
                                   ga[i] += op == kMul ? g[i] * bi : g[i];
                               }
                           }
                           if (Real* gb = grad_buffer(bn)) {
                               for (std::size_t i = 0; i < len; ++i) {
                                   Real d = g[i];
                                   if (op == kSub) d = -d;
                                   if (op == kMul) d = g[i] * an->value[i];
                                   gb[scalar_b ? 0 : i] += d;
                               }
                           }
                       });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, kAdd); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, kSub); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, kMul); }

Tensor Tape::relu(const Tensor& x) {
    std::vector<Real> out(x.values().begin(), x.values().end());
    for (Real& v : out) {
        v = v > Real(0) ? v : Real(0);
    }
    Node* xn = x.node().get();
    return make_output(x.shape(), std::move(out), {&x}, [xn](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                if (xn->value[i] > Real(0)) gx[i] += o.grad[i];
            }
        }
    });
}

Tensor Tape::sigmoid(const Tensor& x) {
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = Real(1) / (Real(1) + std::exp(-x.values()[i]));
    }
    Node* xn = x.node().get();
    return make_output(x.shape(), std::move(out), {&x}, [xn](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const Real s = o.value[i];
                gx[i] += o.grad[i] * s * (Real(1) - s);
            }
        }
    });
}

Tensor Tape::log(const Tensor& x) {
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Real v = x.values()[i];
        if (!(v > Real(0))) {
            throw NumericError("log of non-positive value " + std::to_string(v));
        }
        out[i] = std::log(v);
    }
    Node* xn = x.node().get();
    return make_output(x.shape(), std::move(out), {&x}, [xn](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                gx[i] += o.grad[i] / xn->value[i];
            }
        }
    });
}

Tensor Tape::square(const Tensor& x) {
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x.values()[i] * x.values()[i];
    }
    Node* xn = x.node().get();
    return make_output(x.shape(), std::move(out), {&x}, [xn](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                gx[i] += Real(2) * xn->value[i] * o.grad[i];
            }
        }
    });
}

Tensor Tape::affine(const Tensor& x, Real scale, Real shift) {
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = scale * x.values()[i] + shift;
    }
    Node* xn = x.node().get();
    return make_output(x.shape(), std::move(out), {&x}, [xn, scale](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                gx[i] += scale * o.grad[i];
            }
        }
    });
}

Tensor Tape::clamp(const Tensor& x, Real lo, Real hi) {
    std::vector<Real> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(x.values()[i], lo, hi);
    }
    Node* xn = x.node().get();
    return make_output(x.shape(), std::move(out), {&x}, [xn, lo, hi](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const Real v = xn->value[i];
                if (v >= lo && v <= hi) gx[i] += o.grad[i];
            }
        }
    });
}

Tensor Tape::add_row(const Tensor& x, const Tensor& bias) {
    require_rank2(x, "add_row");
    if (bias.size() != x.cols()) {
        throw DimensionError("add_row: bias width " + std::to_string(bias.size()) +
                             " does not match " + shape_string(x.shape()));
    }
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    std::vector<Real> out(x.values().begin(), x.values().end());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
            out[r * p + c] += bias.values()[c];
        }
    }
    Node* xn = x.node().get();
    Node* bn = bias.node().get();
    return make_output(x.shape(), std::move(out), {&x, &bias}, [xn, bn, n, p](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t i = 0; i < n * p; ++i) gx[i] += o.grad[i];
        }
        if (Real* gb = grad_buffer(bn)) {
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < p; ++c) gb[c] += o.grad[r * p + c];
            }
        }
    });
}

Tensor Tape::sum(const Tensor& x) {
    Real total = 0;
    for (Real v : x.values()) total += v;
    Node* xn = x.node().get();
    return make_output({}, {total}, {&x}, [xn](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            const Real g = o.grad[0];
            for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g;
        }
    });
}

Tensor Tape::row_sum(const Tensor& x) {
    require_rank2(x, "row_sum");
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    std::vector<Real> out(n, Real(0));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) out[r] += x.values()[r * p + c];
    }
    Node* xn = x.node().get();
    return make_output({n, 1}, std::move(out), {&x}, [xn, n, p](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < p; ++c) gx[r * p + c] += o.grad[r];
            }
        }
    });
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
    }
    Node* xn = x.node().get();
    return make_output(std::move(shape), std::vector<Real>(x.values().begin(), x.values().end()),
                       {&x}, [xn](const Node& o) {
                           if (Real* gx = grad_buffer(xn)) {
                               for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
                           }
                       });
}

Tensor Tape::l2_normalize_rows(const Tensor& x) {
    require_rank2(x, "l2_normalize_rows");
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    std::vector<Real> out(x.values().begin(), x.values().end());
    std::vector<Real> norms(n, Real(0));
    for (std::size_t r = 0; r < n; ++r) {
        Real ss = 0;
        for (std::size_t c = 0; c < p; ++c) ss += out[r * p + c] * out[r * p + c];
        norms[r] = std::sqrt(ss);
        if (norms[r] > Real(0)) {
            for (std::size_t c = 0; c < p; ++c) out[r * p + c] /= norms[r];
        }
    }
    Node* xn = x.node().get();
    return make_output(x.shape(), std::move(out), {&x},
                       [xn, n, p, norms = std::move(norms)](const Node& o) {
                           Real* gx = grad_buffer(xn);
                           if (!gx) return;
                           for (std::size_t r = 0; r < n; ++r) {
                               const Real* g = &o.grad[r * p];
                               const Real* y = &o.value[r * p];
                               if (norms[r] == Real(0)) {
                                   for (std::size_t c = 0; c < p; ++c) gx[r * p + c] += g[c];
                                   continue;
                               }
                               Real yg = 0;
                               for (std::size_t c = 0; c < p; ++c) yg += y[c] * g[c];
                               for (std::size_t c = 0; c < p; ++c) {
                                   gx[r * p + c] += (g[c] - y[c] * yg) / norms[r];
                               }
                           }
                       });
}

Tensor Tape::gather_rows(const Tensor& x, const IndexList& rows) {
    require_rank2(x, "gather_rows");
    const std::size_t p = x.cols();
    std::vector<Real> out(rows.size() * p);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= x.rows()) {
            throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range");
        }
        std::copy_n(x.values().data() + rows[r] * p, p, out.data() + r * p);
    }
    Node* xn = x.node().get();
    return make_output({rows.size(), p}, std::move(out), {&x}, [xn, rows, p](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                for (std::size_t c = 0; c < p; ++c) gx[rows[r] * p + c] += o.grad[r * p + c];
            }
        }
    });
}

Tensor Tape::scatter_rows(const Tensor& x, const IndexList& rows, std::size_t n_rows) {
    require_rank2(x, "scatter_rows");
    if (rows.size() != x.rows()) {
        throw DimensionError("scatter_rows: index count does not match row count");
    }
    const std::size_t p = x.cols();
    std::vector<Real> out(n_rows * p, Real(0));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= n_rows) {
            throw DimensionError("scatter_rows: target row out of range");
        }
        std::copy_n(x.values().data() + r * p, p, out.data() + rows[r] * p);
    }
    Node* xn = x.node().get();
    return make_output({n_rows, p}, std::move(out), {&x}, [xn, rows, p](const Node& o) {
        if (Real* gx = grad_buffer(xn)) {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                for (std::size_t c = 0; c < p; ++c) gx[r * p + c] += o.grad[rows[r] * p + c];
            }
        }
    });
}

Tensor Tape::stop_gradient(const Tensor& x) {
    std::vector<Real> v = trace_ ? trace_->pass_values(x.values())
                                 : std::vector<Real>(x.values().begin(), x.values().end());
    return Tensor::from_values(x.shape(), std::move(v), false);
}

Tensor Tape::straight_through(const Tensor& z, const Tensor& z_hat) {
    if (z.shape() != z_hat.shape()) {
        throw DimensionError("straight_through: shape mismatch " + shape_string(z.shape()) +
                             " vs " + shape_string(z_hat.shape()));
    }
    std::vector<Real> out(z_hat.values().begin(), z_hat.values().end());
    if (trace_) {
        // The sg[z_hat - z] offset is what gets frozen; replay adds it back to z.
        std::vector<Real> offset(z.size());
        for (std::size_t i = 0; i < offset.size(); ++i) {
            offset[i] = z_hat.values()[i] - z.values()[i];
        }
        if (trace_->mode() == FreezeTrace::Mode::kReplay) {
            offset = trace_->pass_values(offset);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = z.values()[i] + offset[i];
        } else {
            trace_->pass_values(offset);
        }
    }
    Node* zn = z.node().get();
    return make_output(z.shape(), std::move(out), {&z}, [zn](const Node& o) {
        if (Real* gz = grad_buffer(zn)) {
            for (std::size_t i = 0; i < o.grad.size(); ++i) gz[i] += o.grad[i];
        }
    });
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a single-element tensor");
    }
    Node* root = loss.node().get();
    const auto on_tape = std::find_if(records_.begin(), records_.end(),
                                      [root](const Record& r) { return r.output.get() == root; });
    if (on_tape == records_.end()) {
        throw ContractError("backward: loss was not produced by this tape");
    }
    for (Record& rec : records_) {
        rec.output->grad.clear();
        for (const auto& in : rec.inputs) {
            if (in->is_leaf && in->requires_grad && in->grad.empty()) {
                in->grad.assign(in->value.size(), Real(0));
            }
        }
    }
    root->grad.assign(1, Real(1));
    const auto last = static_cast<std::size_t>(on_tape - records_.begin());
    for (std::size_t i = last + 1; i-- > 0;) {
        const Record& rec = records_[i];
        if (!rec.output->grad.empty()) {
            rec.backward(*rec.output);
        }
    }
}

}  // namespace scsd::diff
