#pragma once

#include <vector>

#include "bcnn/models.hpp"

namespace bcnn {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // applied to decaying parameters only
};

// Bias-corrected Adam. The l2 term weight_decay * theta is added to the
// gradient of parameters flagged weight_decay (weight means and point
// weights, never log_alpha).
class Adam {
public:
    Adam(std::vector<NamedParam> params, AdamConfig config);

    // Consumes the gradients currently stored on the parameters. A
    // non-finite gradient aborts with the parameter named.
    void step();
    void zero_grad();

    const std::vector<NamedParam>& params() const { return params_; }
    std::int64_t step_count() const { return step_count_; }
    void set_step_count(std::int64_t t) { step_count_ = t; }

    // First/second moment accumulators, ordered like params(); exposed for
    // checkpointing.
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }

private:
    std::vector<NamedParam> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::int64_t step_count_ = 0;
};

} // namespace bcnn
