#include <doctest.h>

#include <cmath>

#include "bcnn/variational.hpp"
#include "oracles.hpp"

using namespace bcnn;

namespace {

// Stacks n copies of a single image along the batch axis so one forward
// pass yields n independent activation samples.
TensorPtr replicate(const TensorPtr& x, std::int64_t n) {
    Shape shape = x->shape;
    shape[0] = n;
    auto out = Tensor::zeros(shape);
    const std::size_t row = x->data.size();
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy(x->data.begin(), x->data.end(),
                  out->data.begin() + static_cast<std::size_t>(i) * row);
    }
    return out;
}

} // namespace

TEST_SUITE_BEGIN("variational");

TEST_CASE("MAP mode is exactly the mean path") {
    NoiseStream init(1);
    auto params = init_params({4, 2, 3, 3}, 18, init);
    auto x = Tensor::randn({2, 2, 6, 6}, init);
    auto bias = Tensor::randn({4}, init);
    NoiseStream noise(2);

    auto map_out = bayes_conv2d(x, params, bias, 1, 1, noise, false);
    auto mean_path = add_channel_bias(conv2d(x, params.mu, 1, 1), bias);
    CHECK(map_out->data == mean_path->data);

    auto lx = Tensor::randn({3, 5}, init);
    auto lparams = init_params({5, 4}, 5, init);
    auto lbias = Tensor::randn({4}, init);
    auto lmap = bayes_linear(lx, lparams, lbias, noise, false);
    auto lmean = affine(lx, lparams.mu, lbias);
    CHECK(lmap->data == lmean->data);
}

TEST_CASE("a vanishing variance path collapses to the mean path exactly") {
    NoiseStream init(3);
    auto x = Tensor::randn({1, 1, 4, 4}, init);
    // mu = 0 makes alpha * mu^2 identically zero.
    GaussianVariationalParams params{Tensor::zeros({2, 1, 3, 3}),
                                     Tensor::full({2, 1, 3, 3}, 0.0)};
    NoiseStream noise(4);
    auto out = bayes_conv2d(x, params, nullptr, 1, 0, noise, true);
    for (double v : out->data) CHECK(v == 0.0);

    // Same through the log_alpha -> -inf limit with nonzero mu.
    NoiseStream init2(5);
    auto params2 = init_params({2, 1, 3, 3}, 9, init2, false, -1e9);
    NoiseStream noise2(6);
    auto stochastic = bayes_conv2d(x, params2, nullptr, 1, 0, noise2, true);
    auto mean_only = conv2d(x, params2.mu, 1, 0);
    CHECK(stochastic->data == mean_only->data);
}

TEST_CASE("zero input gives exactly zero output regardless of noise") {
    NoiseStream init(7);
    auto params = init_params({3, 2}, 3, init);
    NoiseStream noise(8);
    auto out = bayes_linear(Tensor::zeros({4, 3}), params, nullptr, noise, true);
    for (double v : out->data) CHECK(v == 0.0);
}

TEST_CASE("scalar conv activation matches the analytic moments") {
    // input 2, mu 3, log_alpha 0: the activation is N(6, 36).
    const std::int64_t draws = 1000000;
    auto x = replicate(Tensor::from_vector({1, 1, 1, 1}, {2.0}), draws);
    GaussianVariationalParams params{Tensor::from_vector({1, 1, 1, 1}, {3.0}),
                                     Tensor::from_vector({1, 1, 1, 1}, {0.0})};
    NoiseStream noise(42);
    auto b = bayes_conv2d(x, params, nullptr, 1, 0, noise, true);

    double mean = 0.0;
    for (double v : b->data) mean += v;
    mean /= static_cast<double>(draws);
    double var = 0.0;
    for (double v : b->data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(draws - 1);

    CHECK(std::abs(mean - 6.0) < 3.0 * 6.0 / 1e3);
    CHECK(var == doctest::Approx(36.0).epsilon(0.02));
}

TEST_CASE("single-unit linear activation matches the analytic moments") {
    const std::int64_t draws = 1000000;
    const double mu0 = -1.3;
    const double la = -0.7;
    auto x = Tensor::full({draws, 1}, 1.0);
    GaussianVariationalParams params{Tensor::from_vector({1, 1}, {mu0}),
                                     Tensor::from_vector({1, 1}, {la})};
    NoiseStream noise(43);
    auto b = bayes_linear(x, params, nullptr, noise, true);

    double mean = 0.0;
    for (double v : b->data) mean += v;
    mean /= static_cast<double>(draws);
    double var = 0.0;
    for (double v : b->data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(draws - 1);

    const double want_var = std::exp(la) * mu0 * mu0;
    CHECK(mean == doctest::Approx(mu0).epsilon(0.005));
    CHECK(var == doctest::Approx(want_var).epsilon(0.02));
}

TEST_CASE("activation sampling matches weight sampling in both moments") {
    // Small conv: 1x1x3x3 input, 1x1x2x2 kernel, so outputs share weights.
    NoiseStream gen(9);
    auto image = Tensor::randn({1, 1, 3, 3}, gen);
    auto mu = Tensor::randn({1, 1, 2, 2}, gen, 0.8);
    auto log_alpha = Tensor::from_vector({1, 1, 2, 2},
                                         {-1.0, -0.5, 0.0, -2.0});
    GaussianVariationalParams params{mu, log_alpha};

    const std::int64_t draws = 200000;
    const std::int64_t out_elems = 4; // 2x2 output

    // Activation sampling through the layer, batched.
    auto rep = replicate(image, draws);
    NoiseStream act_noise(10);
    auto b = bayes_conv2d(rep, params, nullptr, 1, 0, act_noise, true);

    std::vector<double> act_mean(out_elems, 0.0);
    std::vector<double> act_var(out_elems, 0.0);
    for (std::int64_t d = 0; d < draws; ++d) {
        for (std::int64_t j = 0; j < out_elems; ++j) {
            act_mean[j] += b->data[d * out_elems + j];
        }
    }
    for (auto& m : act_mean) m /= static_cast<double>(draws);
    for (std::int64_t d = 0; d < draws; ++d) {
        for (std::int64_t j = 0; j < out_elems; ++j) {
            const double diff = b->data[d * out_elems + j] - act_mean[j];
            act_var[j] += diff * diff;
        }
    }
    for (auto& v : act_var) v /= static_cast<double>(draws - 1);

    // Weight sampling: draw w ~ N(mu, alpha mu^2), then convolve.
    NoiseStream w_noise(11);
    std::vector<double> w_mean(out_elems, 0.0);
    std::vector<double> w_m2(out_elems, 0.0);
    std::vector<double> w(4);
    for (std::int64_t d = 0; d < draws; ++d) {
        for (int j = 0; j < 4; ++j) {
            const double sigma =
                std::sqrt(std::exp(log_alpha->data[j])) * std::abs(mu->data[j]);
            w[j] = mu->data[j] + sigma * w_noise.gaussian();
        }
        std::int64_t ho = 0;
        std::int64_t wo = 0;
        const auto out = oracles::conv2d_brute(image->data, 1, 1, 3, 3, w, 1,
                                               2, 1, 0, ho, wo);
        for (std::int64_t j = 0; j < out_elems; ++j) {
            w_mean[j] += out[j];
            w_m2[j] += out[j] * out[j];
        }
    }
    for (std::int64_t j = 0; j < out_elems; ++j) {
        w_mean[j] /= static_cast<double>(draws);
        w_m2[j] = w_m2[j] / static_cast<double>(draws) - w_mean[j] * w_mean[j];
    }

    for (std::int64_t j = 0; j < out_elems; ++j) {
        // 3 standard errors, combining both estimators' noise.
        const double se_mean = std::sqrt(w_m2[j] / static_cast<double>(draws));
        CHECK(std::abs(act_mean[j] - w_mean[j]) < 3.0 * 2.0 * se_mean + 1e-9);
        const double se_var =
            w_m2[j] * std::sqrt(2.0 / static_cast<double>(draws - 1));
        CHECK(std::abs(act_var[j] - w_m2[j]) < 3.0 * 2.0 * se_var + 1e-9);
    }
}

TEST_CASE("gradients through the stochastic layers match finite differences") {
    NoiseStream gen(12);

    SUBCASE("bayes_conv2d with fixed noise") {
        auto x = Tensor::randn({1, 2, 4, 4}, gen);
        NoiseStream init(13);
        auto params = init_params({3, 2, 3, 3}, 18, init, false, -1.0);
        auto bias = Tensor::randn({3}, gen);
        const auto probe = [&] {
            NoiseStream fixed(77); // same draws every rebuild
            return bayes_conv2d(x, params, bias, 1, 0, fixed, true);
        };
        auto r = Tensor::randn(probe()->shape, gen);
        const auto build = [&] { return sum(mul(probe(), r)); };
        CHECK(oracles::max_grad_error({params.mu, params.log_alpha, bias, x},
                                      build) < 1e-6);
    }

    SUBCASE("bayes_linear with fixed noise") {
        auto x = Tensor::randn({3, 4}, gen);
        NoiseStream init(14);
        auto params = init_params({4, 2}, 4, init, false, -0.5);
        auto bias = Tensor::randn({2}, gen);
        auto r = Tensor::randn({3, 2}, gen);
        const auto build = [&] {
            NoiseStream fixed(78);
            return sum(mul(bayes_linear(x, params, bias, fixed, true), r));
        };
        CHECK(oracles::max_grad_error({params.mu, params.log_alpha, bias, x},
                                      build) < 1e-6);
    }
}

TEST_CASE("output spread is nondecreasing in each log_alpha entry") {
    NoiseStream gen(15);
    auto x = Tensor::randn({1, 1, 3, 3}, gen);
    auto mu = Tensor::randn({1, 1, 2, 2}, gen);
    auto la = Tensor::full({1, 1, 2, 2}, -2.0);

    const auto spread = [&](const TensorPtr& log_alpha) {
        GaussianVariationalParams params{mu, log_alpha};
        NoiseStream fixed(16); // identical eps for every call
        auto m = conv2d(x, mu, 1, 0);
        auto b = bayes_conv2d(x, params, nullptr, 1, 0, fixed, true);
        double acc = 0.0;
        for (std::size_t i = 0; i < b->data.size(); ++i) {
            acc += std::abs(b->data[i] - m->data[i]);
        }
        return acc;
    };

    const double base = spread(la);
    for (int j = 0; j < 4; ++j) {
        auto bumped = Tensor::from_vector(la->shape, la->data);
        bumped->data[static_cast<std::size_t>(j)] += 0.5;
        CHECK(spread(bumped) >= base - 1e-12);
    }
}

TEST_CASE("init_params fills log_alpha with -10 and is seed-deterministic") {
    NoiseStream a(20);
    auto pa = init_params({8, 4}, 4, a);
    for (double v : pa.log_alpha->data) CHECK(v == -10.0);
    for (std::size_t i = 0; i < pa.mu->data.size(); ++i) {
        const double mu = pa.mu->data[i];
        const double variance = std::exp(pa.log_alpha->data[i]) * mu * mu;
        CHECK(variance <= 4.54e-5 * mu * mu + 1e-300);
    }

    NoiseStream b(20);
    auto pb = init_params({8, 4}, 4, b);
    CHECK(pa.mu->data == pb.mu->data);

    NoiseStream c(21);
    auto pc = init_params({8, 4}, 4, c);
    CHECK(pa.mu->data != pc.mu->data);
}

TEST_CASE("init_params scales mu by fan-in unless plain init is requested") {
    NoiseStream a(22);
    auto scaled = init_params({400, 32}, 400, a);
    double sq = 0.0;
    for (double v : scaled.mu->data) sq += v * v;
    const double std_scaled =
        std::sqrt(sq / static_cast<double>(scaled.mu->numel()));
    CHECK(std_scaled == doctest::Approx(1.0 / 20.0).epsilon(0.05));

    NoiseStream b(22);
    auto plain = init_params({400, 32}, 400, b, true);
    sq = 0.0;
    for (double v : plain.mu->data) sq += v * v;
    CHECK(std::sqrt(sq / static_cast<double>(plain.mu->numel())) ==
          doctest::Approx(1.0).epsilon(0.05));
}

TEST_SUITE_END();
