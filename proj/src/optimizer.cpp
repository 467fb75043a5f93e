#include "scsd/optimizer.hpp"

#include <cmath>

#include "scsd/errors.hpp"

namespace scsd::optim {

AdamW::AdamW(std::vector<diff::Tensor*> params, AdamWOptions options)
    : params_(std::move(params)), opt_(options) {
    if (!(opt_.lr > Real(0))) throw ParameterError("learning rate must be positive");
    if (opt_.weight_decay < Real(0)) throw ParameterError("weight decay must be non-negative");
    if (opt_.beta1 < Real(0) || opt_.beta1 >= Real(1) || opt_.beta2 < Real(0) ||
        opt_.beta2 >= Real(1)) {
        throw ParameterError("betas must lie in [0, 1)");
    }
    for (const diff::Tensor* p : params_) {
        m_.emplace_back(p->size(), Real(0));
        v_.emplace_back(p->size(), Real(0));
    }
}

void AdamW::step() {
    ++t_;
    const Real bias1 = Real(1) - std::pow(opt_.beta1, static_cast<Real>(t_));
    const Real bias2 = Real(1) - std::pow(opt_.beta2, static_cast<Real>(t_));
    const Real step_size = opt_.lr / bias1;
    const Real bias2_sqrt = std::sqrt(bias2);
    const Real shrink = Real(1) - opt_.lr * opt_.weight_decay;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        diff::Tensor& p = *params_[k];
        auto values = p.mutable_values();
        const auto grad = p.grad();
        const bool has_grad = grad.size() == values.size();
        std::vector<Real>& m = m_[k];
        std::vector<Real>& v = v_[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Real g = has_grad ? grad[i] : Real(0);
            values[i] *= shrink;
            m[i] = opt_.beta1 * m[i] + (Real(1) - opt_.beta1) * g;
            v[i] = opt_.beta2 * v[i] + (Real(1) - opt_.beta2) * g * g;
            const Real denom = std::sqrt(v[i]) / bias2_sqrt + opt_.eps;
            values[i] -= step_size * m[i] / denom;
        }
    }
}

void AdamW::zero_grad() {
    for (diff::Tensor* p : params_) p->zero_grad();
}

void AdamW::load_state(std::size_t step, std::vector<std::vector<Real>> m,
                       std::vector<std::vector<Real>> v) {
    if (m.size() != params_.size() || v.size() != params_.size()) {
        throw DimensionError("optimizer state does not match the parameter list");
    }
    for (std::size_t k = 0; k < params_.size(); ++k) {
        if (m[k].size() != params_[k]->size() || v[k].size() != params_[k]->size()) {
            throw DimensionError("optimizer state does not match the parameter list");
        }
    }
    t_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace scsd::optim
