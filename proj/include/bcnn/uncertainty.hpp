#pragma once

#include <span>
#include <string>
#include <vector>

#include "bcnn/models.hpp"

namespace bcnn {

enum class NormalizerKind { softplus_n, softmax };

NormalizerKind normalizer_from_string(const std::string& s);
std::string to_string(NormalizerKind kind);

// T rows of normalized class probabilities, one per stochastic forward
// pass. Each row is strictly positive and sums to one.
struct PredictiveSamples {
    std::int64_t T = 0;
    std::int64_t C = 0;
    std::vector<double> probs; // T x C row-major

    std::span<const double> row(std::int64_t t) const {
        return {probs.data() + t * C, static_cast<std::size_t>(C)};
    }
};

// Predictive-variance split for one input: the within-sample multinomial
// part (aleatoric) and the across-sample covariance part (epistemic), plus
// trace/C scalar summaries.
struct UncertaintyReport {
    std::vector<double> aleatoric; // C x C
    std::vector<double> epistemic; // C x C
    std::vector<double> mean_probs;
    double scalar_aleatoric = 0.0;
    double scalar_epistemic = 0.0;
    int predicted_class = 0;
};

// y_c = softplus(x_c) / sum_k softplus(x_k); strictly positive, sums to 1.
std::vector<double> softplus_normalize(std::span<const double> logits,
                                       double beta = 1.0);

// Baseline normalizer, computed with the usual max shift.
std::vector<double> softmax(std::span<const double> logits);

// T stochastic forward passes of one image, normalized per pass. The
// passes are realized as one batched forward with fresh noise per row, so
// the rows are independent samples; deterministic given the stream seed.
PredictiveSamples mc_predict(Model& model, const TensorPtr& image, int T,
                             NormalizerKind normalizer, NoiseStream& noise);

// aleatoric = (1/T) sum_t [diag(p_t) - p_t p_t^T],
// epistemic = (1/T) sum_t (p_t - pbar)(p_t - pbar)^T.
UncertaintyReport decompose(const PredictiveSamples& samples);

struct BatchUncertaintyResult {
    double mean_aleatoric = 0.0;
    double mean_epistemic = 0.0;
    double accuracy = 0.0; // meaningful only when labels were provided
    bool has_accuracy = false;

    struct PerImage {
        double aleatoric = 0.0;
        double epistemic = 0.0;
        int predicted = 0;
    };
    std::vector<PerImage> per_image;
};

// Per-image decomposition followed by arithmetic means of the scalar
// summaries. Every image restarts the noise stream from the same seed, so
// the aggregate of a duplicated image set matches the original set.
BatchUncertaintyResult batch_uncertainty(Model& model, const TensorPtr& images,
                                         std::span<const int> labels, int T,
                                         NormalizerKind normalizer,
                                         std::uint64_t noise_seed);

} // namespace bcnn
