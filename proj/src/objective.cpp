#include "bcnn/objective.hpp"

#include <cassert>
#include <cmath>

#include "bcnn/errors.hpp"

namespace bcnn {

double KLWeightSchedule::beta(std::int64_t i) const {
    if (M < 1) throw ContractError("KLWeightSchedule: M must be >= 1");
    if (i < 1 || i > M) {
        throw ContractError("KLWeightSchedule: batch index " +
                            std::to_string(i) + " outside 1.." +
                            std::to_string(M));
    }
    if (M <= 60) {
        return std::exp2(static_cast<double>(M - i)) /
               (std::exp2(static_cast<double>(M)) - 1.0);
    }
    // 2^M overflows well before M = 1024; work in log space:
    // log beta_i = (M-i) log 2 - log(2^M - 1) = -i log 2 - log1p(-2^-M).
    constexpr double kLog2 = 0.6931471805599453;
    return std::exp(-static_cast<double>(i) * kLog2 -
                    std::log1p(-std::exp2(-static_cast<double>(M))));
}

TensorPtr kl_gaussian(const GaussianVariationalParams& params,
                      const PriorSpec& prior) {
    if (!(prior.std > 0.0)) {
        throw ContractError("kl_gaussian: prior std must be positive");
    }
    const double inv_s2 = 1.0 / (prior.std * prior.std);
    TensorPtr centered = prior.mean == 0.0
                             ? params.mu
                             : scalar_add(params.mu, -prior.mean);
    TensorPtr mean_sq = mul(centered, centered);
    TensorPtr variance = clamp_min(
        mul(exp(params.log_alpha), mul(params.mu, params.mu)),
        kKlVarianceFloor);
    TensorPtr ratio = scalar_mul(variance, inv_s2);
    TensorPtr terms = scalar_add(
        sub(add(scalar_mul(mean_sq, inv_s2), ratio), log(ratio)), -1.0);
    return scalar_mul(sum(terms), 0.5);
}

TensorPtr nll_categorical(const TensorPtr& probs,
                          std::span<const int> labels) {
    if (probs->shape.size() != 2) {
        throw ShapeError("nll_categorical: expected [N, C] probabilities, "
                         "got " +
                         probs->shape_str());
    }
    const std::int64_t n = probs->shape[0];
    const std::int64_t c = probs->shape[1];
    if (static_cast<std::int64_t>(labels.size()) != n) {
        throw ContractError("nll_categorical: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(n) + " rows");
    }
    for (int label : labels) {
        if (label < 0 || label >= c) {
            throw ContractError("nll_categorical: label " +
                                std::to_string(label) + " out of range [0, " +
                                std::to_string(c) + ")");
        }
    }

    std::vector<int> label_copy(labels.begin(), labels.end());
    auto out = make_op({1}, {probs}, [label_copy, n, c](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        const double g = self.grad[0];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::int64_t row = 0; row < n; ++row) {
            const std::int64_t idx =
                row * c + label_copy[static_cast<std::size_t>(row)];
            const double pv = p.data[static_cast<std::size_t>(idx)];
            if (pv > kNllProbFloor) {
                p.grad[static_cast<std::size_t>(idx)] -= g * inv_n / pv;
            }
        }
    });

    double acc = 0.0;
    for (std::int64_t row = 0; row < n; ++row) {
        const double pv = probs->data[static_cast<std::size_t>(
            row * c + label_copy[static_cast<std::size_t>(row)])];
        acc -= std::log(std::max(pv, kNllProbFloor));
    }
    out->data[0] = acc / static_cast<double>(n);
    return out;
}

FreeEnergyStats free_energy(const Batch& batch, Model& model,
                            const KLWeightSchedule& schedule, std::int64_t i,
                            int S, NoiseStream& noise, bool accumulate_grads,
                            bool stochastic, bool include_kl,
                            const PriorSpec& prior) {
    if (S < 1) throw ContractError("free_energy: S must be >= 1");
    const double beta_i = schedule.beta(i);
    const std::int64_t n = batch.images->shape[0];
    const std::int64_t c = model.spec.num_classes;

    FreeEnergyStats stats;
    std::vector<double> prob_sum(static_cast<std::size_t>(n * c), 0.0);
    double nll_acc = 0.0;
    for (int s = 0; s < S; ++s) {
        TensorPtr logits = model.forward(batch.images, noise, stochastic);
        TensorPtr probs = softplus_normalize_rows(logits, 1.0);
        TensorPtr nll = nll_categorical(probs, batch.labels);
        nll_acc += nll->value();
        for (std::size_t j = 0; j < prob_sum.size(); ++j) {
            prob_sum[j] += probs->data[j];
        }
        if (accumulate_grads) {
            backward(scalar_mul(nll, 1.0 / static_cast<double>(S)));
        }
    }
    stats.loss.nll = nll_acc / static_cast<double>(S);
    stats.loss.beta_i = beta_i;

    if (include_kl) {
        // The means are trained by the likelihood alone (plus their l2
        // term); the complexity cost updates only the log-variance scales.
        // mu therefore enters the KL as a constant here, which leaves the
        // value untouched and routes the KL gradient to log_alpha.
        TensorPtr kl_total;
        for (const auto& params : model.variational_params()) {
            const GaussianVariationalParams frozen_mean{
                Tensor::from_vector(params.mu->shape, params.mu->data),
                params.log_alpha};
            TensorPtr layer_kl = kl_gaussian(frozen_mean, prior);
            kl_total = kl_total ? add(kl_total, layer_kl) : layer_kl;
        }
        if (kl_total) {
            stats.loss.kl = kl_total->value();
            if (accumulate_grads) backward(scalar_mul(kl_total, beta_i));
        }
    }
    stats.loss.total = beta_i * stats.loss.kl + stats.loss.nll;

    for (std::int64_t row = 0; row < n; ++row) {
        const double* p = prob_sum.data() + row * c;
        int best = 0;
        for (std::int64_t j = 1; j < c; ++j) {
            if (p[j] > p[best]) best = static_cast<int>(j);
        }
        if (best == batch.labels[static_cast<std::size_t>(row)]) {
            ++stats.correct;
        }
    }
    return stats;
}

} // namespace bcnn
