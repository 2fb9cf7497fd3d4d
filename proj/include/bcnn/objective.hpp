#pragma once

#include <span>

#include "bcnn/data.hpp"
#include "bcnn/models.hpp"

namespace bcnn {

// One minibatch of the variational free energy: likelihood cost (NLL),
// complexity cost (KL), the minibatch KL weight, and the weighted total.
struct LossBreakdown {
    double nll = 0.0;
    double kl = 0.0;
    double beta_i = 0.0;
    double total = 0.0;
};

// Minibatch KL weights beta_i = 2^(M-i) / (2^M - 1) for i in 1..M; the
// weights sum to one and front-load the complexity cost within an epoch.
struct KLWeightSchedule {
    std::int64_t M = 1;

    double beta(std::int64_t i) const;
};

// Closed-form KL(N(mu, e^log_alpha mu^2) || N(prior)) summed over all
// entries, as a differentiable scalar node. The variance is floored at
// 1e-30 before the log so mu = 0 stays finite.
TensorPtr kl_gaussian(const GaussianVariationalParams& params,
                      const PriorSpec& prior);

inline constexpr double kKlVarianceFloor = 1e-30;
inline constexpr double kNllProbFloor = 1e-12;

// -(1/N) sum_n log probs[n, label_n], probabilities floored at 1e-12
// inside the log. Differentiable scalar node.
TensorPtr nll_categorical(const TensorPtr& probs, std::span<const int> labels);

struct FreeEnergyStats {
    LossBreakdown loss;
    int correct = 0; // argmax of the S-pass average probabilities vs labels
};

// Averages the NLL of S stochastic forward passes through the
// softplus-normalized head and adds beta_i * KL. When accumulate_grads is
// set, gradients of the total are left in every trainable parameter
// (backward runs per pass, so graph memory stays bounded in S).
// stochastic=false / include_kl=false give the point-estimate objective.
FreeEnergyStats free_energy(const Batch& batch, Model& model,
                            const KLWeightSchedule& schedule, std::int64_t i,
                            int S, NoiseStream& noise, bool accumulate_grads,
                            bool stochastic = true, bool include_kl = true,
                            const PriorSpec& prior = {});

} // namespace bcnn
