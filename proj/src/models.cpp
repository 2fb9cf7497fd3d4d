#include "bcnn/models.hpp"

#include "bcnn/errors.hpp"

namespace bcnn {

VariationalConv2d::VariationalConv2d(std::string name, std::int64_t c_in,
                                     std::int64_t c_out, int k, int stride,
                                     int padding, NoiseStream& init_noise,
                                     bool plain_gaussian_mu)
    : name(std::move(name)), stride(stride), padding(padding) {
    params = init_params({c_out, c_in, k, k}, c_in * k * k, init_noise,
                         plain_gaussian_mu);
    bias = Tensor::zeros({c_out});
    bias->set_requires_grad(true);
}

TensorPtr VariationalConv2d::forward(const TensorPtr& x, NoiseStream& noise,
                                     bool stochastic) {
    return bayes_conv2d(x, params, bias, stride, padding, noise, stochastic);
}

void VariationalConv2d::collect_params(std::vector<NamedParam>& out) {
    out.push_back({name + ".mu", params.mu, true});
    out.push_back({name + ".log_alpha", params.log_alpha, false});
    out.push_back({name + ".bias", bias, false});
}

void VariationalConv2d::collect_variational(
    std::vector<GaussianVariationalParams>& out) const {
    out.push_back(params);
}

VariationalLinear::VariationalLinear(std::string name, std::int64_t d_in,
                                     std::int64_t d_out,
                                     NoiseStream& init_noise,
                                     bool plain_gaussian_mu)
    : name(std::move(name)) {
    params = init_params({d_in, d_out}, d_in, init_noise, plain_gaussian_mu);
    bias = Tensor::zeros({d_out});
    bias->set_requires_grad(true);
}

TensorPtr VariationalLinear::forward(const TensorPtr& x, NoiseStream& noise,
                                     bool stochastic) {
    return bayes_linear(x, params, bias, noise, stochastic);
}

void VariationalLinear::collect_params(std::vector<NamedParam>& out) {
    out.push_back({name + ".mu", params.mu, true});
    out.push_back({name + ".log_alpha", params.log_alpha, false});
    out.push_back({name + ".bias", bias, false});
}

void VariationalLinear::collect_variational(
    std::vector<GaussianVariationalParams>& out) const {
    out.push_back(params);
}

TensorPtr Model::forward(const TensorPtr& images, NoiseStream& noise,
                         bool stochastic) {
    if (images->shape.size() != 4 || images->shape[1] != spec.input_shape[0] ||
        images->shape[2] != spec.input_shape[1] ||
        images->shape[3] != spec.input_shape[2]) {
        throw ShapeError("forward: input " + images->shape_str() +
                         " does not match the " + spec.name + " contract");
    }
    TensorPtr x = images;
    for (auto& layer : layers) {
        x = layer->forward(x, noise, stochastic);
    }
    return x;
}

std::vector<NamedParam> Model::parameters() const {
    std::vector<NamedParam> out;
    for (const auto& layer : layers) layer->collect_params(out);
    return out;
}

std::vector<GaussianVariationalParams> Model::variational_params() const {
    std::vector<GaussianVariationalParams> out;
    for (const auto& layer : layers) layer->collect_variational(out);
    return out;
}

Model build(const std::string& name, int num_classes, std::int64_t in_channels,
            std::uint64_t init_seed, bool plain_gaussian_mu) {
    if (num_classes < 2) throw ContractError("build: num_classes must be >= 2");
    if (in_channels != 1 && in_channels != 3) {
        throw ContractError("build: in_channels must be 1 or 3");
    }

    Model model;
    model.spec.name = name;
    model.spec.num_classes = num_classes;
    NoiseStream init(init_seed);
    std::uint64_t next_layer = 0;
    const auto layer_noise = [&] { return init.substream(next_layer++); };

    const auto conv = [&](std::string lname, std::int64_t c_in,
                          std::int64_t c_out, int k, int stride, int padding) {
        auto noise = layer_noise();
        model.layers.push_back(std::make_unique<VariationalConv2d>(
            std::move(lname), c_in, c_out, k, stride, padding, noise,
            plain_gaussian_mu));
        model.layers.push_back(std::make_unique<SoftplusActivation>());
    };
    const auto pool = [&] {
        model.layers.push_back(std::make_unique<MaxPool>(2, 2));
    };
    const auto fc = [&](std::string lname, std::int64_t d_in,
                        std::int64_t d_out, bool hidden) {
        auto noise = layer_noise();
        model.layers.push_back(std::make_unique<VariationalLinear>(
            std::move(lname), d_in, d_out, noise, plain_gaussian_mu));
        if (hidden) {
            model.layers.push_back(std::make_unique<SoftplusActivation>());
        }
    };

    if (name == "lenet5") {
        model.spec.input_shape = {in_channels, 32, 32};
        conv("conv1", in_channels, 6, 5, 1, 0); // 32 -> 28
        pool();                                 // 28 -> 14
        conv("conv2", 6, 16, 5, 1, 0);          // 14 -> 10
        pool();                                 // 10 -> 5
        model.layers.push_back(std::make_unique<Flatten>());
        fc("fc1", 16 * 5 * 5, 120, true);
        fc("fc2", 120, 84, true);
        fc("fc3", 84, num_classes, false);
    } else if (name == "alexnet") {
        model.spec.input_shape = {3, 32, 32};
        conv("conv1", 3, 64, 11, 4, 5); // 32 -> 8
        pool();                         // 8 -> 4
        conv("conv2", 64, 192, 5, 1, 2);
        pool(); // 4 -> 2
        conv("conv3", 192, 384, 3, 1, 1);
        conv("conv4", 384, 256, 3, 1, 1);
        conv("conv5", 256, 128, 3, 1, 1);
        pool(); // 2 -> 1
        model.layers.push_back(std::make_unique<Flatten>());
        fc("fc1", 128, num_classes, false);
    } else if (name == "vgg") {
        model.spec.input_shape = {3, 32, 32};
        const std::int64_t widths[5][3] = {{64, 64, 0},
                                           {128, 128, 0},
                                           {256, 256, 256},
                                           {512, 512, 512},
                                           {512, 512, 512}};
        std::int64_t c_in = 3;
        int idx = 1;
        for (const auto& block : widths) {
            for (std::int64_t width : block) {
                if (width == 0) continue;
                conv("conv" + std::to_string(idx++), c_in, width, 3, 1, 1);
                c_in = width;
            }
            pool();
        }
        model.layers.push_back(std::make_unique<Flatten>());
        fc("fc1", 512, num_classes, false);
    } else {
        throw ContractError("build: unknown architecture \"" + name + "\"");
    }
    return model;
}

} // namespace bcnn
