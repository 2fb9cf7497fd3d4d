#include "bcnn/variational.hpp"

#include <cassert>
#include <cmath>

#include "bcnn/errors.hpp"

namespace bcnn {

namespace {

// sqrt with an exact forward value and a stabilized backward rule:
// d sqrt/dx is evaluated at x + eps so a zero variance path cannot blow up
// the gradient, while the forward output stays exactly zero there.
TensorPtr sqrt_stabilized(const TensorPtr& v, double eps) {
    auto out = make_op(v->shape, {v}, [eps](Tensor& self) {
        Tensor& x = *self.parents[0];
        if (!x.needs_grad) return;
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            x.grad[i] += self.grad[i] * 0.5 / std::sqrt(x.data[i] + eps);
        }
    });
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        const double x = v->data[i];
        assert(x > -1e-9 && "variance path must be nonnegative");
        out->data[i] = std::sqrt(x > 0.0 ? x : 0.0);
    }
    return out;
}

TensorPtr variance_weights(const GaussianVariationalParams& params) {
    return mul(exp(params.log_alpha), mul(params.mu, params.mu));
}

} // namespace

GaussianVariationalParams init_params(Shape shape, std::int64_t fan_in,
                                      NoiseStream& noise,
                                      bool plain_gaussian_mu,
                                      double log_alpha_init) {
    if (fan_in < 1) throw ContractError("init_params: fan_in must be >= 1");
    const double scale =
        plain_gaussian_mu ? 1.0 : 2.0 / std::sqrt(static_cast<double>(fan_in));
    GaussianVariationalParams p;
    p.mu = Tensor::randn(shape, noise, scale);
    p.mu->set_requires_grad(true);
    p.log_alpha = Tensor::full(std::move(shape), log_alpha_init);
    p.log_alpha->set_requires_grad(true);
    return p;
}

TensorPtr bayes_conv2d(const TensorPtr& input,
                       const GaussianVariationalParams& params,
                       const TensorPtr& bias, int stride, int padding,
                       NoiseStream& noise, bool stochastic) {
    TensorPtr m = conv2d(input, params.mu, stride, padding);
    if (bias) m = add_channel_bias(m, bias);
    if (!stochastic) return m;

    TensorPtr v =
        conv2d(mul(input, input), variance_weights(params), stride, padding);
    TensorPtr eps = Tensor::zeros(m->shape);
    noise.fill_gaussian(eps->data);
    return add(m, mul(eps, sqrt_stabilized(v, kVarianceEpsilon)));
}

TensorPtr bayes_linear(const TensorPtr& input,
                       const GaussianVariationalParams& params,
                       const TensorPtr& bias, NoiseStream& noise,
                       bool stochastic) {
    TensorPtr m = affine(input, params.mu, bias);
    if (!stochastic) return m;

    TensorPtr v =
        affine(mul(input, input), variance_weights(params), nullptr);
    TensorPtr eps = Tensor::zeros(m->shape);
    noise.fill_gaussian(eps->data);
    return add(m, mul(eps, sqrt_stabilized(v, kVarianceEpsilon)));
}

} // namespace bcnn
