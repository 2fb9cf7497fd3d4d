#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bcnn/errors.hpp"
#include "bcnn/rng.hpp"

namespace bcnn {

using Shape = std::vector<std::int64_t>;

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/**
 * Dense row-major tensor with reverse-mode gradients.
 *
 * Every operation below produces a fresh node holding its inputs in
 * `parents` and a backward rule in `backward_fn`; backward() replays the
 * recorded rules in reverse topological order, so each rule runs exactly
 * once per pass. Data is immutable once an op has produced the node; only
 * the `grad` accumulator changes afterwards. Gradients accumulate across
 * backward() calls on leaves until zero_grad().
 */
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false; // leaf wants a gradient
    bool needs_grad = false;    // requires_grad or downstream of such a leaf
    std::vector<double> grad;   // same length as data once allocated

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;

    static TensorPtr zeros(Shape shape);
    static TensorPtr full(Shape shape, double value);
    static TensorPtr from_vector(Shape shape, std::vector<double> values);
    static TensorPtr scalar(double value);
    static TensorPtr randn(Shape shape, NoiseStream& noise, double scale = 1.0);

    std::int64_t numel() const;
    std::string shape_str() const;

    // Scalar accessor; throws ContractError unless numel() == 1.
    double value() const;

    double at(std::initializer_list<std::int64_t> idx) const;
    double& at(std::initializer_list<std::int64_t> idx);
    std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const;

    void set_requires_grad(bool on);
    void ensure_grad();
    void zero_grad();
};

// Creates an op node; the caller fills `data` and the backward rule reads
// this node's grad and accumulates into the parents' grads.
TensorPtr make_op(Shape shape, std::vector<TensorPtr> parents,
                  std::function<void(Tensor&)> backward_fn);

// Elementwise arithmetic (operands must have identical shapes).
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scalar_add(const TensorPtr& a, double c);
TensorPtr scalar_mul(const TensorPtr& a, double c);

// Elementwise transcendentals.
TensorPtr exp(const TensorPtr& a);
TensorPtr log(const TensorPtr& a);
TensorPtr sqrt(const TensorPtr& a);
TensorPtr clamp_min(const TensorPtr& a, double lo);

// Smooth ReLU: (1/beta) * log(1 + exp(beta * x)), overflow-safe and
// strictly positive for every finite input.
TensorPtr softplus(const TensorPtr& a, double beta = 1.0);
double softplus_value(double x, double beta = 1.0);
double softplus_derivative(double x, double beta = 1.0);

// Reductions to a scalar node.
TensorPtr sum(const TensorPtr& a);
TensorPtr mean(const TensorPtr& a);

// Copies into a new shape with the same element count.
TensorPtr reshape(const TensorPtr& a, Shape shape);

// input [N, D_in] * weight [D_in, D_out] + bias [D_out] (bias may be null).
TensorPtr affine(const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias);

// Cross-correlation of zero-padded input [N, C_in, H, W] with square
// kernels weight [C_out, C_in, k, k].
TensorPtr conv2d(const TensorPtr& input, const TensorPtr& weight, int stride,
                 int padding);

// y[n, c, h, w] = x[n, c, h, w] + bias[c].
TensorPtr add_channel_bias(const TensorPtr& input, const TensorPtr& bias);

// Window max over k x k patches; ties route the gradient to the first
// element in row-major window order.
TensorPtr maxpool2d(const TensorPtr& input, int k, int stride);

// Row-wise softplus normalization of logits [N, C]:
// y_c = softplus(x_c) / sum_k softplus(x_k). Rows are strictly positive
// and sum to one.
TensorPtr softplus_normalize_rows(const TensorPtr& logits, double beta = 1.0);

// Populates every requires_grad leaf reachable from a scalar root with
// d(root)/d(leaf). Repeated calls accumulate into leaf grads.
void backward(const TensorPtr& root);

void zero_grad(std::span<const TensorPtr> params);

} // namespace bcnn
