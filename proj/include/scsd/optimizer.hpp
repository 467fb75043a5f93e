#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scsd/diffcore.hpp"

namespace scsd::optim {

struct AdamWOptions {
    Real lr = Real(1e-3);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
    Real weight_decay = Real(1e-3);
};

/// Adaptive-moment optimizer with decoupled weight decay. Each step first
/// shrinks the parameter by lr * weight_decay, then applies the
/// bias-corrected moment update. A parameter without a gradient buffer is
/// treated as having a zero gradient.
class AdamW {
public:
    AdamW(std::vector<diff::Tensor*> params, AdamWOptions options = {});

    void step();
    void zero_grad();
    std::size_t step_count() const { return t_; }
    const AdamWOptions& options() const { return opt_; }

    /// First and second moment buffers, in parameter order.
    const std::vector<std::vector<Real>>& first_moments() const { return m_; }
    const std::vector<std::vector<Real>>& second_moments() const { return v_; }
    void load_state(std::size_t step, std::vector<std::vector<Real>> m,
                    std::vector<std::vector<Real>> v);

private:
    std::vector<diff::Tensor*> params_;
    AdamWOptions opt_;
    std::vector<std::vector<Real>> m_;
    std::vector<std::vector<Real>> v_;
    std::size_t t_ = 0;
};

}  // namespace scsd::optim
