#pragma once

#include "bcnn/rng.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn {

// Factorized Gaussian posterior over one weight tensor:
// q(w) = N(mu, alpha * mu^2) elementwise. The scale is carried as
// log alpha, so the variance exp(log_alpha) * mu^2 is nonnegative by
// construction and only one parameter per path is learned.
struct GaussianVariationalParams {
    TensorPtr mu;
    TensorPtr log_alpha;
};

// Gaussian prior over weights; standard normal unless configured.
struct PriorSpec {
    double mean = 0.0;
    double std = 1.0;
};

// Stabilizer for the gradient of sqrt at a zero variance path.
inline constexpr double kVarianceEpsilon = 1e-16;

// mu drawn from N(0, 1/fan_in) (or N(0, 1) when plain_gaussian_mu) and
// log_alpha filled with a constant, -10 by default.
GaussianVariationalParams init_params(Shape shape, std::int64_t fan_in,
                                      NoiseStream& noise,
                                      bool plain_gaussian_mu = false,
                                      double log_alpha_init = -10.0);

// Variational convolution via activation sampling: one convolution for the
// activation mean (input * mu), one for the activation variance
// (input^2 * alpha mu^2), then b = m + eps (.) sqrt(v) with fresh
// standard-normal eps per activation element. stochastic=false returns the
// mean path only (MAP evaluation); bias, when non-null, is a point
// estimate added to the mean path.
TensorPtr bayes_conv2d(const TensorPtr& input,
                       const GaussianVariationalParams& params,
                       const TensorPtr& bias, int stride, int padding,
                       NoiseStream& noise, bool stochastic);

// Same two-path construction with the affine map in place of convolution.
TensorPtr bayes_linear(const TensorPtr& input,
                       const GaussianVariationalParams& params,
                       const TensorPtr& bias, NoiseStream& noise,
                       bool stochastic);

} // namespace bcnn
