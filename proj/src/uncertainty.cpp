#include "bcnn/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bcnn/errors.hpp"

namespace bcnn {

NormalizerKind normalizer_from_string(const std::string& s) {
    if (s == "softplus_n") return NormalizerKind::softplus_n;
    if (s == "softmax") return NormalizerKind::softmax;
    throw ContractError("unknown normalizer \"" + s + "\"");
}

std::string to_string(NormalizerKind kind) {
    return kind == NormalizerKind::softplus_n ? "softplus_n" : "softmax";
}

std::vector<double> softplus_normalize(std::span<const double> logits,
                                       double beta) {
    if (logits.size() < 2) {
        throw ContractError("softplus_normalize: need at least 2 classes");
    }
    if (!(beta > 0.0)) {
        throw ContractError("softplus_normalize: beta must be positive");
    }
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = softplus_value(logits[i], beta);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.size() < 2) {
        throw ContractError("softmax: need at least 2 classes");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

PredictiveSamples mc_predict(Model& model, const TensorPtr& image, int T,
                             NormalizerKind normalizer, NoiseStream& noise) {
    if (T < 1) throw ContractError("mc_predict: T must be >= 1");
    TensorPtr single = image;
    if (single->shape.size() == 3) {
        single = reshape(single, {1, single->shape[0], single->shape[1],
                                  single->shape[2]});
    }
    if (single->shape.size() != 4 || single->shape[0] != 1) {
        throw ShapeError("mc_predict: expected one image, got " +
                         image->shape_str());
    }

    // One batched pass with T copies; each row draws its own noise.
    Shape rep_shape = single->shape;
    rep_shape[0] = T;
    auto rep = Tensor::zeros(rep_shape);
    const std::size_t row = single->data.size();
    for (int t = 0; t < T; ++t) {
        std::memcpy(rep->data.data() + static_cast<std::size_t>(t) * row,
                    single->data.data(), row * sizeof(double));
    }
    TensorPtr logits = model.forward(rep, noise, /*stochastic=*/true);

    PredictiveSamples samples;
    samples.T = T;
    samples.C = logits->shape[1];
    samples.probs.resize(static_cast<std::size_t>(T) * samples.C);
    for (int t = 0; t < T; ++t) {
        std::span<const double> lrow{logits->data.data() + t * samples.C,
                                     static_cast<std::size_t>(samples.C)};
        const auto p = normalizer == NormalizerKind::softplus_n
                           ? softplus_normalize(lrow)
                           : softmax(lrow);
        std::copy(p.begin(), p.end(),
                  samples.probs.begin() + static_cast<std::size_t>(t) * samples.C);
    }
    return samples;
}

UncertaintyReport decompose(const PredictiveSamples& samples) {
    const std::int64_t t_count = samples.T;
    const std::int64_t c = samples.C;
    if (t_count < 1 || c < 2 ||
        samples.probs.size() != static_cast<std::size_t>(t_count * c)) {
        throw ContractError("decompose: malformed sample matrix");
    }
    constexpr double kSimplexTol = 1e-6;
    for (std::int64_t t = 0; t < t_count; ++t) {
        double total = 0.0;
        for (double v : samples.row(t)) {
            if (v < 0.0) {
                throw ContractError("decompose: negative probability in row " +
                                    std::to_string(t));
            }
            total += v;
        }
        if (std::abs(total - 1.0) > kSimplexTol) {
            throw ContractError("decompose: row " + std::to_string(t) +
                                " sums to " + std::to_string(total));
        }
    }

    UncertaintyReport report;
    report.aleatoric.assign(static_cast<std::size_t>(c * c), 0.0);
    report.epistemic.assign(static_cast<std::size_t>(c * c), 0.0);
    report.mean_probs.assign(static_cast<std::size_t>(c), 0.0);

    const double inv_t = 1.0 / static_cast<double>(t_count);
    for (std::int64_t t = 0; t < t_count; ++t) {
        const auto p = samples.row(t);
        for (std::int64_t j = 0; j < c; ++j) {
            report.mean_probs[static_cast<std::size_t>(j)] += p[j] * inv_t;
        }
    }
    for (std::int64_t t = 0; t < t_count; ++t) {
        const auto p = samples.row(t);
        for (std::int64_t j = 0; j < c; ++j) {
            for (std::int64_t k = 0; k < c; ++k) {
                const double diag = j == k ? p[j] : 0.0;
                report.aleatoric[static_cast<std::size_t>(j * c + k)] +=
                    (diag - p[j] * p[k]) * inv_t;
                const double dj = p[j] - report.mean_probs[j];
                const double dk = p[k] - report.mean_probs[k];
                report.epistemic[static_cast<std::size_t>(j * c + k)] +=
                    dj * dk * inv_t;
            }
        }
    }

    double tr_a = 0.0;
    double tr_e = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
        tr_a += report.aleatoric[static_cast<std::size_t>(j * c + j)];
        tr_e += report.epistemic[static_cast<std::size_t>(j * c + j)];
    }
    report.scalar_aleatoric = tr_a / static_cast<double>(c);
    report.scalar_epistemic = tr_e / static_cast<double>(c);

    int best = 0;
    for (std::int64_t j = 1; j < c; ++j) {
        if (report.mean_probs[static_cast<std::size_t>(j)] >
            report.mean_probs[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(j);
        }
    }
    report.predicted_class = best;
    return report;
}

BatchUncertaintyResult batch_uncertainty(Model& model, const TensorPtr& images,
                                         std::span<const int> labels, int T,
                                         NormalizerKind normalizer,
                                         std::uint64_t noise_seed) {
    if (!images || images->shape.size() != 4 || images->shape[0] < 1) {
        throw ContractError("batch_uncertainty: nonempty image set required");
    }
    const std::int64_t n = images->shape[0];
    if (!labels.empty() && static_cast<std::int64_t>(labels.size()) != n) {
        throw ContractError("batch_uncertainty: label count mismatch");
    }

    BatchUncertaintyResult result;
    result.per_image.reserve(static_cast<std::size_t>(n));
    const std::size_t row = static_cast<std::size_t>(images->numel() / n);
    int correct = 0;
    for (std::int64_t img = 0; img < n; ++img) {
        auto x = Tensor::zeros(
            {1, images->shape[1], images->shape[2], images->shape[3]});
        std::memcpy(x->data.data(),
                    images->data.data() + static_cast<std::size_t>(img) * row,
                    row * sizeof(double));
        NoiseStream noise(noise_seed);
        const auto samples = mc_predict(model, x, T, normalizer, noise);
        const auto report = decompose(samples);
        result.mean_aleatoric += report.scalar_aleatoric;
        result.mean_epistemic += report.scalar_epistemic;
        result.per_image.push_back({report.scalar_aleatoric,
                                    report.scalar_epistemic,
                                    report.predicted_class});
        if (!labels.empty() &&
            report.predicted_class == labels[static_cast<std::size_t>(img)]) {
            ++correct;
        }
    }
    result.mean_aleatoric /= static_cast<double>(n);
    result.mean_epistemic /= static_cast<double>(n);
    if (!labels.empty()) {
        result.has_accuracy = true;
        result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    }
    return result;
}

} // namespace bcnn
