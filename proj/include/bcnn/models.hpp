#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bcnn/variational.hpp"

namespace bcnn {

struct NamedParam {
    std::string name;
    TensorPtr tensor;
    bool weight_decay = false; // true for weight means, never for log_alpha
};

struct ArchitectureSpec {
    std::string name; // "lenet5" | "alexnet" | "vgg"
    Shape input_shape = {1, 32, 32};
    int num_classes = 10;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual TensorPtr forward(const TensorPtr& x, NoiseStream& noise,
                              bool stochastic) = 0;
    virtual void collect_params(std::vector<NamedParam>&) {}
    virtual void collect_variational(
        std::vector<GaussianVariationalParams>&) const {}
};

class VariationalConv2d : public Layer {
public:
    VariationalConv2d(std::string name, std::int64_t c_in, std::int64_t c_out,
                      int k, int stride, int padding, NoiseStream& init_noise,
                      bool plain_gaussian_mu);
    TensorPtr forward(const TensorPtr& x, NoiseStream& noise,
                      bool stochastic) override;
    void collect_params(std::vector<NamedParam>& out) override;
    void collect_variational(
        std::vector<GaussianVariationalParams>& out) const override;

    std::string name;
    GaussianVariationalParams params;
    TensorPtr bias;
    int stride;
    int padding;
};

class VariationalLinear : public Layer {
public:
    VariationalLinear(std::string name, std::int64_t d_in, std::int64_t d_out,
                      NoiseStream& init_noise, bool plain_gaussian_mu);
    TensorPtr forward(const TensorPtr& x, NoiseStream& noise,
                      bool stochastic) override;
    void collect_params(std::vector<NamedParam>& out) override;
    void collect_variational(
        std::vector<GaussianVariationalParams>& out) const override;

    std::string name;
    GaussianVariationalParams params;
    TensorPtr bias;
};

class SoftplusActivation : public Layer {
public:
    explicit SoftplusActivation(double beta = 1.0) : beta(beta) {}
    TensorPtr forward(const TensorPtr& x, NoiseStream&, bool) override {
        return softplus(x, beta);
    }
    double beta;
};

class MaxPool : public Layer {
public:
    MaxPool(int k, int stride) : k(k), stride(stride) {}
    TensorPtr forward(const TensorPtr& x, NoiseStream&, bool) override {
        return maxpool2d(x, k, stride);
    }
    int k;
    int stride;
};

class Flatten : public Layer {
public:
    TensorPtr forward(const TensorPtr& x, NoiseStream&, bool) override {
        return reshape(x, {x->shape[0], x->numel() / x->shape[0]});
    }
};

// A feed-forward stack of variational layers. The forward pass emits the
// pre-normalization class scores; consumers apply their own normalization.
class Model {
public:
    ArchitectureSpec spec;
    std::vector<std::unique_ptr<Layer>> layers;

    TensorPtr forward(const TensorPtr& images, NoiseStream& noise,
                      bool stochastic);

    std::vector<NamedParam> parameters() const;
    std::vector<GaussianVariationalParams> variational_params() const;
};

// Constructs one of the three reference architectures. in_channels selects
// a 1- or 3-channel input plane (grayscale datasets keep one channel for
// lenet5; alexnet and vgg always take three).
Model build(const std::string& name, int num_classes, std::int64_t in_channels,
            std::uint64_t init_seed, bool plain_gaussian_mu = false);

} // namespace bcnn
