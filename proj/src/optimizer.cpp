#include "bcnn/optimizer.hpp"

#include <cmath>

#include "bcnn/errors.hpp"

namespace bcnn {

Adam::Adam(std::vector<NamedParam> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor->data.size(), 0.0);
        v_.emplace_back(p.tensor->data.size(), 0.0);
    }
}

void Adam::step() {
    ++step_count_;
    const double bc1 =
        1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bc2 =
        1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        NamedParam& p = params_[pi];
        p.tensor->ensure_grad();
        auto& theta = p.tensor->data;
        const auto& grad = p.tensor->grad;
        auto& m = m_[pi];
        auto& v = v_[pi];
        const double decay = p.weight_decay ? config_.weight_decay : 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = grad[i] + decay * theta[i];
            if (!std::isfinite(g)) {
                throw Error("adam_step: non-finite gradient in parameter \"" +
                            p.name + "\"");
            }
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p.tensor->ensure_grad();
        p.tensor->zero_grad();
    }
}

} // namespace bcnn
