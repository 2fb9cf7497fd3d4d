#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (nested loops, quadrature) and share no code with the
// library paths they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "bcnn/tensor.hpp"

namespace oracles {

// Plain nested-loop cross-correlation with zero padding.
inline std::vector<double> conv2d_brute(
    const std::vector<double>& input, std::int64_t n, std::int64_t c_in,
    std::int64_t h, std::int64_t w, const std::vector<double>& weight,
    std::int64_t c_out, std::int64_t k, int stride, int padding,
    std::int64_t& ho, std::int64_t& wo) {
    ho = (h + 2 * padding - k) / stride + 1;
    wo = (w + 2 * padding - k) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(n * c_out * ho * wo), 0.0);
    for (std::int64_t img = 0; img < n; ++img) {
        for (std::int64_t co = 0; co < c_out; ++co) {
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                for (std::int64_t ow = 0; ow < wo; ++ow) {
                    double acc = 0.0;
                    for (std::int64_t ci = 0; ci < c_in; ++ci) {
                        for (std::int64_t kh = 0; kh < k; ++kh) {
                            for (std::int64_t kw = 0; kw < k; ++kw) {
                                const std::int64_t ih =
                                    oh * stride + kh - padding;
                                const std::int64_t iw =
                                    ow * stride + kw - padding;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= w) {
                                    continue;
                                }
                                acc += input[static_cast<std::size_t>(
                                           ((img * c_in + ci) * h + ih) * w +
                                           iw)] *
                                       weight[static_cast<std::size_t>(
                                           ((co * c_in + ci) * k + kh) * k +
                                           kw)];
                            }
                        }
                    }
                    out[static_cast<std::size_t>(
                        ((img * c_out + co) * ho + oh) * wo + ow)] = acc;
                }
            }
        }
    }
    return out;
}

// Window maximum, scanning each window in row-major order.
inline std::vector<double> maxpool_brute(const std::vector<double>& input,
                                         std::int64_t n, std::int64_t c,
                                         std::int64_t h, std::int64_t w, int k,
                                         int stride, std::int64_t& ho,
                                         std::int64_t& wo) {
    ho = (h - k) / stride + 1;
    wo = (w - k) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(n * c * ho * wo));
    std::size_t oi = 0;
    for (std::int64_t img = 0; img < n; ++img) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                for (std::int64_t ow = 0; ow < wo; ++ow, ++oi) {
                    double best = -1e300;
                    for (int kh = 0; kh < k; ++kh) {
                        for (int kw = 0; kw < k; ++kw) {
                            const double v = input[static_cast<std::size_t>(
                                ((img * c + ch) * h + oh * stride + kh) * w +
                                ow * stride + kw)];
                            if (v > best) best = v;
                        }
                    }
                    out[oi] = best;
                }
            }
        }
    }
    return out;
}

// KL(N(mu, sigma2) || N(m0, s0^2)) by composite Simpson quadrature of the
// defining integral over +-12 posterior standard deviations.
inline double kl_gauss_quadrature(double mu, double sigma2, double m0,
                                  double s0) {
    const double sigma = std::sqrt(sigma2);
    const double lo = mu - 12.0 * sigma;
    const double hi = mu + 12.0 * sigma;
    const int intervals = 20000; // even
    const double step = (hi - lo) / intervals;
    const auto integrand = [&](double x) {
        const double log_q = -0.5 * std::log(2.0 * M_PI * sigma2) -
                             (x - mu) * (x - mu) / (2.0 * sigma2);
        const double log_p = -0.5 * std::log(2.0 * M_PI * s0 * s0) -
                             (x - m0) * (x - m0) / (2.0 * s0 * s0);
        return std::exp(log_q) * (log_q - log_p);
    };
    double acc = integrand(lo) + integrand(hi);
    for (int i = 1; i < intervals; ++i) {
        acc += integrand(lo + i * step) * (i % 2 ? 4.0 : 2.0);
    }
    return acc * step / 3.0;
}

// Monte-Carlo estimate of KL(q || p) via the sampled cost
// mean of [log q(w) - log p(w)] with w ~ q = N(mu, e^log_alpha mu^2).
// Returns {estimate, standard error}.
inline std::pair<double, double> kl_mc(double mu, double log_alpha, double m0,
                                       double s0, std::int64_t draws,
                                       std::uint64_t seed) {
    const double sigma2 = std::exp(log_alpha) * mu * mu;
    const double sigma = std::sqrt(sigma2);
    bcnn::NoiseStream noise(seed);
    double acc = 0.0;
    double acc2 = 0.0;
    for (std::int64_t i = 0; i < draws; ++i) {
        const double w = mu + sigma * noise.gaussian();
        const double log_q = -0.5 * std::log(2.0 * M_PI * sigma2) -
                             (w - mu) * (w - mu) / (2.0 * sigma2);
        const double log_p = -0.5 * std::log(2.0 * M_PI * s0 * s0) -
                             (w - m0) * (w - m0) / (2.0 * s0 * s0);
        const double v = log_q - log_p;
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / static_cast<double>(draws);
    const double var =
        acc2 / static_cast<double>(draws) - mean * mean;
    return {mean, std::sqrt(var / static_cast<double>(draws))};
}

// Max discrepancy between analytic gradients and central finite
// differences; errors are relative above unit gradient magnitude and
// absolute below. build() must construct the scalar graph fresh from the
// leaves' current data.
inline double max_grad_error(
    const std::vector<bcnn::TensorPtr>& leaves,
    const std::function<bcnn::TensorPtr()>& build, double h = 1e-5) {
    for (const auto& leaf : leaves) {
        leaf->set_requires_grad(true);
        leaf->ensure_grad();
        leaf->zero_grad();
    }
    bcnn::backward(build());

    double worst = 0.0;
    for (const auto& leaf : leaves) {
        for (std::size_t i = 0; i < leaf->data.size(); ++i) {
            const double saved = leaf->data[i];
            leaf->data[i] = saved + h;
            const double f_plus = build()->value();
            leaf->data[i] = saved - h;
            const double f_minus = build()->value();
            leaf->data[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double err =
                std::abs(leaf->grad[i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace oracles
