#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "scsd/errors.hpp"
#include "scsd/types.hpp"

// Reverse-mode differentiation over dense row-major tensors.
//
// A Tape records every operation executed through it (define-by-run) and
// replays the recorded backward rules in reverse on Tape::backward. Only the
// operations the SCSD graph needs are provided; broadcasting is limited to
// scalar operands and row-vector bias addition.

namespace scsd::diff {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until a backward pass touches the node
    bool requires_grad = false;
    bool is_leaf = true;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<Real> values, bool requires_grad = false);
    static Tensor from_matrix(const Matrix& m, bool requires_grad = false);
    static Tensor scalar(Real v);

    /// Independent copy of value, grad and flags (handles otherwise share storage).
    Tensor clone() const;

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const Real> values() const { return node_->value; }
    std::span<Real> mutable_values() { return node_->value; }
    Real item() const;
    Real at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    Matrix to_matrix() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    bool is_leaf() const { return node_->is_leaf; }

    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer; empty span when no backward pass has reached this tensor.
    std::span<const Real> grad() const { return node_->grad; }
    std::span<Real> mutable_grad() { return node_->grad; }
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend class Tape;

    std::shared_ptr<Node> node_;
};

/// Record/replay log for the non-differentiable decisions of a forward pass.
///
/// In record mode every stop-gradient output and every quantizer index
/// selection is stored. In replay mode those values are returned verbatim,
/// which turns each sg[.] into a true constant. This makes the tape's
/// gradient the exact derivative of the replayed function, so it can be
/// checked against finite differences.
class FreezeTrace {
public:
    enum class Mode { kRecord, kReplay };

    Mode mode() const { return mode_; }
    void start_record();
    void start_replay();

    std::vector<Real> pass_values(std::span<const Real> current);
    std::vector<std::size_t> pass_indices(std::vector<std::size_t> current);

    std::size_t recorded_values() const { return values_.size(); }

private:
    Mode mode_ = Mode::kRecord;
    std::vector<std::vector<Real>> values_;
    std::vector<std::vector<std::size_t>> indices_;
    std::size_t value_cursor_ = 0;
    std::size_t index_cursor_ = 0;
};

class Tape {
public:
    explicit Tape(FreezeTrace* trace = nullptr) : trace_(trace) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// With gradients disabled no operation is recorded and outputs never
    /// require grad.
    void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
    bool grad_enabled() const { return grad_enabled_; }
    FreezeTrace* trace() const { return trace_; }
    std::size_t size() const { return records_.size(); }

    Tensor matmul(const Tensor& a, const Tensor& b);

    // Elementwise. The second operand may be a single-element tensor.
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor relu(const Tensor& x);
    Tensor sigmoid(const Tensor& x);
    Tensor log(const Tensor& x);
    Tensor square(const Tensor& x);
    /// scale * x + shift
    Tensor affine(const Tensor& x, Real scale, Real shift);
    /// Forward clamps into [lo, hi]; gradient passes only where x was inside.
    Tensor clamp(const Tensor& x, Real lo, Real hi);

    /// x[n x p] + bias[1 x p] broadcast over rows.
    Tensor add_row(const Tensor& x, const Tensor& bias);
    Tensor sum(const Tensor& x);
    Tensor row_sum(const Tensor& x);
    Tensor reshape(const Tensor& x, Shape shape);

    /// Unit-norm scaling of each row; all-zero rows pass through unchanged.
    Tensor l2_normalize_rows(const Tensor& x);
    Tensor gather_rows(const Tensor& x, const IndexList& rows);
    /// Places row r of x at output row rows[r] of an n_rows-tall zero matrix.
    Tensor scatter_rows(const Tensor& x, const IndexList& rows, std::size_t n_rows);

    /// Identity forward, zero backward.
    Tensor stop_gradient(const Tensor& x);
    /// Forward value of z_hat, gradient copied unchanged to z; z + sg[z_hat - z].
    Tensor straight_through(const Tensor& z, const Tensor& z_hat);

    /// Populates grads of every requires-grad ancestor of a single-element loss.
    /// Leaf gradients accumulate across calls; intermediate gradients are reset.
    void backward(const Tensor& loss);

private:
    using BackwardFn = std::function<void(const Node& out)>;

    Tensor make_output(Shape shape, std::vector<Real> value,
                       std::initializer_list<const Tensor*> inputs, BackwardFn fn);
    Tensor elementwise_binary(const Tensor& a, const Tensor& b, int op);

    struct Record {
        std::vector<std::shared_ptr<Node>> inputs;
        std::shared_ptr<Node> output;
        BackwardFn backward;
    };

    FreezeTrace* trace_ = nullptr;
    bool grad_enabled_ = true;
    std::vector<Record> records_;
};

}  // namespace scsd::diff
