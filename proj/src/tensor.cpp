#include "bcnn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace bcnn {

namespace {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRM>;
using CMapM = Eigen::Map<const MatrixRM>;

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) n *= d;
    return n;
}

void check_positive_dims(const Shape& s) {
    for (std::int64_t d : s) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    }
}

#ifndef NDEBUG
void debug_check_finite(const Tensor& t) {
    for (double v : t.data) assert(std::isfinite(v));
}
#else
void debug_check_finite(const Tensor&) {}
#endif

// Gathers zero-padded k x k patches of one image into a
// [C_in*k*k, Ho*Wo] column matrix.
void im2col(const double* img, std::int64_t c_in, std::int64_t h,
            std::int64_t w, int k, int stride, int padding, std::int64_t ho,
            std::int64_t wo, double* cols) {
    const std::int64_t out_hw = ho * wo;
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
        const double* plane = img + ci * h * w;
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                double* row = cols + ((ci * k + kh) * k + kw) * out_hw;
                for (std::int64_t oh = 0; oh < ho; ++oh) {
                    const std::int64_t ih = oh * stride + kh - padding;
                    if (ih < 0 || ih >= h) {
                        std::fill(row + oh * wo, row + (oh + 1) * wo, 0.0);
                        continue;
                    }
                    for (std::int64_t ow = 0; ow < wo; ++ow) {
                        const std::int64_t iw = ow * stride + kw - padding;
                        row[oh * wo + ow] =
                            (iw < 0 || iw >= w) ? 0.0 : plane[ih * w + iw];
                    }
                }
            }
        }
    }
}

// Scatter-adds a [C_in*k*k, Ho*Wo] column-gradient matrix back onto one
// image, ignoring positions that fell in the zero padding.
void col2im_add(const double* cols, std::int64_t c_in, std::int64_t h,
                std::int64_t w, int k, int stride, int padding,
                std::int64_t ho, std::int64_t wo, double* grad_img) {
    const std::int64_t out_hw = ho * wo;
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
        double* plane = grad_img + ci * h * w;
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                const double* row = cols + ((ci * k + kh) * k + kw) * out_hw;
                for (std::int64_t oh = 0; oh < ho; ++oh) {
                    const std::int64_t ih = oh * stride + kh - padding;
                    if (ih < 0 || ih >= h) continue;
                    for (std::int64_t ow = 0; ow < wo; ++ow) {
                        const std::int64_t iw = ow * stride + kw - padding;
                        if (iw < 0 || iw >= w) continue;
                        plane[ih * w + iw] += row[oh * wo + ow];
                    }
                }
            }
        }
    }
}

} // namespace

TensorPtr Tensor::zeros(Shape shape) {
    check_positive_dims(shape);
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(shape_numel(t->shape)), 0.0);
    return t;
}

TensorPtr Tensor::full(Shape shape, double value) {
    auto t = zeros(std::move(shape));
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::from_vector(Shape shape, std::vector<double> values) {
    check_positive_dims(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
        throw ShapeError("from_vector: data length " +
                         std::to_string(values.size()) +
                         " does not match shape element count " +
                         std::to_string(shape_numel(shape)));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    return t;
}

TensorPtr Tensor::scalar(double value) { return full({1}, value); }

TensorPtr Tensor::randn(Shape shape, NoiseStream& noise, double scale) {
    auto t = zeros(std::move(shape));
    for (double& v : t->data) v = noise.gaussian() * scale;
    return t;
}

std::int64_t Tensor::numel() const { return shape_numel(shape); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("value(): tensor " + shape_str() +
                            " is not scalar-shaped");
    }
    return data[0];
}

std::int64_t Tensor::flat_index(std::initializer_list<std::int64_t> idx) const {
    if (idx.size() != shape.size()) {
        throw ContractError("index rank does not match tensor rank");
    }
    std::int64_t flat = 0;
    std::size_t d = 0;
    for (std::int64_t i : idx) {
        flat = flat * shape[d] + i;
        ++d;
    }
    return flat;
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
    return data[static_cast<std::size_t>(flat_index(idx))];
}

double& Tensor::at(std::initializer_list<std::int64_t> idx) {
    return data[static_cast<std::size_t>(flat_index(idx))];
}

void Tensor::set_requires_grad(bool on) {
    requires_grad = on;
    needs_grad = needs_grad || on;
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

TensorPtr make_op(Shape shape, std::vector<TensorPtr> parents,
                  std::function<void(Tensor&)> backward_fn) {
    auto t = std::make_shared<Tensor>();
    check_positive_dims(shape);
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(shape_numel(t->shape)), 0.0);
    t->parents = std::move(parents);
    for (const auto& p : t->parents) {
        if (p->needs_grad) t->needs_grad = true;
    }
    if (t->needs_grad) t->backward_fn = std::move(backward_fn);
    return t;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
    }
}

// Elementwise op skeleton: fwd(x) and backward gx += g * dfdx(x, y).
// Templated so the per-element calls inline.
template <class Fwd, class Dfdx>
TensorPtr unary_elementwise(const TensorPtr& a, Fwd fwd, Dfdx dfdx) {
    auto out = make_op(a->shape, {a}, [dfdx](Tensor& self) {
        Tensor& x = *self.parents[0];
        if (!x.needs_grad) return;
        x.ensure_grad();
        for (std::size_t i = 0; i < self.data.size(); ++i) {
            x.grad[i] += self.grad[i] * dfdx(x.data[i], self.data[i]);
        }
    });
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = fwd(a->data[i]);
    }
    debug_check_finite(*out);
    return out;
}

} // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "add");
    auto out = make_op(a->shape, {a, b}, [](Tensor& self) {
        for (int side = 0; side < 2; ++side) {
            Tensor& p = *self.parents[side];
            if (!p.needs_grad) continue;
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[i] += self.grad[i];
            }
        }
    });
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = a->data[i] + b->data[i];
    }
    debug_check_finite(*out);
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "sub");
    auto out = make_op(a->shape, {a, b}, [](Tensor& self) {
        Tensor& pa = *self.parents[0];
        Tensor& pb = *self.parents[1];
        if (pa.needs_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                pa.grad[i] += self.grad[i];
            }
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                pb.grad[i] -= self.grad[i];
            }
        }
    });
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = a->data[i] - b->data[i];
    }
    debug_check_finite(*out);
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "mul");
    auto out = make_op(a->shape, {a, b}, [](Tensor& self) {
        Tensor& pa = *self.parents[0];
        Tensor& pb = *self.parents[1];
        if (pa.needs_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                pa.grad[i] += self.grad[i] * pb.data[i];
            }
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                pb.grad[i] += self.grad[i] * pa.data[i];
            }
        }
    });
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = a->data[i] * b->data[i];
    }
    debug_check_finite(*out);
    return out;
}

TensorPtr scalar_add(const TensorPtr& a, double c) {
    return unary_elementwise(
        a, [c](double x) { return x + c; },
        [](double, double) { return 1.0; });
}

TensorPtr scalar_mul(const TensorPtr& a, double c) {
    return unary_elementwise(
        a, [c](double x) { return x * c; },
        [c](double, double) { return c; });
}

TensorPtr exp(const TensorPtr& a) {
    return unary_elementwise(
        a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

TensorPtr log(const TensorPtr& a) {
    return unary_elementwise(
        a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

TensorPtr sqrt(const TensorPtr& a) {
    return unary_elementwise(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

TensorPtr clamp_min(const TensorPtr& a, double lo) {
    return unary_elementwise(
        a, [lo](double x) { return x < lo ? lo : x; },
        [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

double softplus_value(double x, double beta) {
    const double y =
        std::max(x, 0.0) + std::log1p(std::exp(-beta * std::abs(x))) / beta;
    // log1p underflows to exact zero below x ~ -745/beta; keep the output
    // strictly positive for every finite input.
    return y > 0.0 ? y : std::numeric_limits<double>::denorm_min();
}

double softplus_derivative(double x, double beta) {
    const double bx = beta * x;
    if (bx >= 0.0) return 1.0 / (1.0 + std::exp(-bx));
    const double e = std::exp(bx);
    return e / (1.0 + e);
}

TensorPtr softplus(const TensorPtr& a, double beta) {
    if (!(beta > 0.0)) throw ContractError("softplus: beta must be positive");
    return unary_elementwise(
        a, [beta](double x) { return softplus_value(x, beta); },
        [beta](double x, double) { return softplus_derivative(x, beta); });
}

TensorPtr sum(const TensorPtr& a) {
    auto out = make_op({1}, {a}, [](Tensor& self) {
        Tensor& x = *self.parents[0];
        if (!x.needs_grad) return;
        x.ensure_grad();
        const double g = self.grad[0];
        for (double& gi : x.grad) gi += g;
    });
    out->data[0] = std::accumulate(a->data.begin(), a->data.end(), 0.0);
    debug_check_finite(*out);
    return out;
}

TensorPtr mean(const TensorPtr& a) {
    const double inv_n = 1.0 / static_cast<double>(a->numel());
    auto out = make_op({1}, {a}, [inv_n](Tensor& self) {
        Tensor& x = *self.parents[0];
        if (!x.needs_grad) return;
        x.ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (double& gi : x.grad) gi += g;
    });
    out->data[0] =
        std::accumulate(a->data.begin(), a->data.end(), 0.0) * inv_n;
    debug_check_finite(*out);
    return out;
}

TensorPtr reshape(const TensorPtr& a, Shape shape) {
    if (shape_numel(shape) != a->numel()) {
        throw ShapeError("reshape: element count mismatch " + a->shape_str());
    }
    auto out = make_op(std::move(shape), {a}, [](Tensor& self) {
        Tensor& x = *self.parents[0];
        if (!x.needs_grad) return;
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            x.grad[i] += self.grad[i];
        }
    });
    out->data = a->data;
    return out;
}

TensorPtr affine(const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias) {
    if (input->shape.size() != 2 || weight->shape.size() != 2) {
        throw ShapeError("affine: expected 2-d input and weight, got " +
                         input->shape_str() + " and " + weight->shape_str());
    }
    const std::int64_t n = input->shape[0];
    const std::int64_t d_in = input->shape[1];
    const std::int64_t d_out = weight->shape[1];
    if (weight->shape[0] != d_in) {
        throw ShapeError("affine: inner dimensions disagree, input " +
                         input->shape_str() + " vs weight " +
                         weight->shape_str());
    }
    if (bias && (bias->shape.size() != 1 || bias->shape[0] != d_out)) {
        throw ShapeError("affine: bias " + bias->shape_str() +
                         " does not match output width " +
                         std::to_string(d_out));
    }

    std::vector<TensorPtr> parents = {input, weight};
    if (bias) parents.push_back(bias);
    auto out = make_op({n, d_out}, std::move(parents), [n, d_in,
                                                        d_out](Tensor& self) {
        Tensor& x = *self.parents[0];
        Tensor& w = *self.parents[1];
        CMapM g(self.grad.data(), n, d_out);
        if (x.needs_grad) {
            x.ensure_grad();
            MapM gx(x.grad.data(), n, d_in);
            CMapM wm(w.data.data(), d_in, d_out);
            gx.noalias() += g * wm.transpose();
        }
        if (w.needs_grad) {
            w.ensure_grad();
            MapM gw(w.grad.data(), d_in, d_out);
            CMapM xm(x.data.data(), n, d_in);
            gw.noalias() += xm.transpose() * g;
        }
        if (self.parents.size() > 2 && self.parents[2]->needs_grad) {
            Tensor& b = *self.parents[2];
            b.ensure_grad();
            Eigen::Map<Eigen::VectorXd> gb(b.grad.data(), d_out);
            gb.noalias() += g.colwise().sum().transpose();
        }
    });

    MapM om(out->data.data(), n, d_out);
    CMapM xm(input->data.data(), n, d_in);
    CMapM wm(weight->data.data(), d_in, d_out);
    om.noalias() = xm * wm;
    if (bias) {
        Eigen::Map<const Eigen::RowVectorXd> bm(bias->data.data(), d_out);
        om.rowwise() += bm;
    }
    debug_check_finite(*out);
    return out;
}

TensorPtr conv2d(const TensorPtr& input, const TensorPtr& weight, int stride,
                 int padding) {
    if (input->shape.size() != 4 || weight->shape.size() != 4) {
        throw ShapeError("conv2d: expected 4-d input and weight, got " +
                         input->shape_str() + " and " + weight->shape_str());
    }
    const std::int64_t n = input->shape[0];
    const std::int64_t c_in = input->shape[1];
    const std::int64_t h = input->shape[2];
    const std::int64_t w = input->shape[3];
    const std::int64_t c_out = weight->shape[0];
    const std::int64_t k = weight->shape[2];
    if (weight->shape[1] != c_in) {
        throw ShapeError("conv2d: input channel count mismatch, input " +
                         input->shape_str() + " vs weight " +
                         weight->shape_str());
    }
    if (weight->shape[3] != k) {
        throw ShapeError("conv2d: kernels must be square, got " +
                         weight->shape_str());
    }
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    if (padding < 0) throw ContractError("conv2d: padding must be >= 0");
    if (k > h + 2 * padding || k > w + 2 * padding) {
        throw ShapeError("conv2d: kernel " + weight->shape_str() +
                         " larger than padded input " + input->shape_str());
    }
    const std::int64_t ho = (h + 2 * padding - k) / stride + 1;
    const std::int64_t wo = (w + 2 * padding - k) / stride + 1;
    const std::int64_t patch = c_in * k * k;
    const std::int64_t out_hw = ho * wo;
    const int ki = static_cast<int>(k);

    auto out = make_op(
        {n, c_out, ho, wo}, {input, weight},
        [n, c_in, h, w, c_out, ki, stride, padding, ho, wo, patch,
         out_hw](Tensor& self) {
            Tensor& x = *self.parents[0];
            Tensor& wt = *self.parents[1];
            CMapM wm(wt.data.data(), c_out, patch);
            std::vector<double> cols(static_cast<std::size_t>(patch * out_hw));
            std::vector<double> gcols;
            if (x.needs_grad) {
                x.ensure_grad();
                gcols.resize(static_cast<std::size_t>(patch * out_hw));
            }
            if (wt.needs_grad) wt.ensure_grad();
            for (std::int64_t img = 0; img < n; ++img) {
                CMapM g(self.grad.data() + img * c_out * out_hw, c_out,
                        out_hw);
                if (wt.needs_grad) {
                    im2col(x.data.data() + img * c_in * h * w, c_in, h, w, ki,
                           stride, padding, ho, wo, cols.data());
                    CMapM cm(cols.data(), patch, out_hw);
                    MapM gw(wt.grad.data(), c_out, patch);
                    gw.noalias() += g * cm.transpose();
                }
                if (x.needs_grad) {
                    MapM gc(gcols.data(), patch, out_hw);
                    gc.noalias() = wm.transpose() * g;
                    col2im_add(gcols.data(), c_in, h, w, ki, stride, padding,
                               ho, wo, x.grad.data() + img * c_in * h * w);
                }
            }
        });

    CMapM wm(weight->data.data(), c_out, patch);
    std::vector<double> cols(static_cast<std::size_t>(patch * out_hw));
    for (std::int64_t img = 0; img < n; ++img) {
        im2col(input->data.data() + img * c_in * h * w, c_in, h, w, ki, stride,
               padding, ho, wo, cols.data());
        CMapM cm(cols.data(), patch, out_hw);
        MapM om(out->data.data() + img * c_out * out_hw, c_out, out_hw);
        om.noalias() = wm * cm;
    }
    debug_check_finite(*out);
    return out;
}

TensorPtr add_channel_bias(const TensorPtr& input, const TensorPtr& bias) {
    if (input->shape.size() != 4 || bias->shape.size() != 1 ||
        bias->shape[0] != input->shape[1]) {
        throw ShapeError("add_channel_bias: input " + input->shape_str() +
                         " vs bias " + bias->shape_str());
    }
    const std::int64_t n = input->shape[0];
    const std::int64_t c = input->shape[1];
    const std::int64_t hw = input->shape[2] * input->shape[3];
    auto out = make_op(input->shape, {input, bias}, [n, c, hw](Tensor& self) {
        Tensor& x = *self.parents[0];
        Tensor& b = *self.parents[1];
        if (x.needs_grad) {
            x.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                x.grad[i] += self.grad[i];
            }
        }
        if (b.needs_grad) {
            b.ensure_grad();
            for (std::int64_t img = 0; img < n; ++img) {
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const double* g = self.grad.data() + (img * c + ch) * hw;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) acc += g[i];
                    b.grad[ch] += acc;
                }
            }
        }
    });
    for (std::int64_t img = 0; img < n; ++img) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double* src = input->data.data() + (img * c + ch) * hw;
            double* dst = out->data.data() + (img * c + ch) * hw;
            const double bv = bias->data[static_cast<std::size_t>(ch)];
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bv;
        }
    }
    debug_check_finite(*out);
    return out;
}

TensorPtr maxpool2d(const TensorPtr& input, int k, int stride) {
    if (input->shape.size() != 4) {
        throw ShapeError("maxpool2d: expected 4-d input, got " +
                         input->shape_str());
    }
    const std::int64_t n = input->shape[0];
    const std::int64_t c = input->shape[1];
    const std::int64_t h = input->shape[2];
    const std::int64_t w = input->shape[3];
    if (k > h || k > w) {
        throw ShapeError("maxpool2d: window " + std::to_string(k) +
                         " larger than input " + input->shape_str());
    }
    if (stride < 1) throw ContractError("maxpool2d: stride must be >= 1");
    const std::int64_t ho = (h - k) / stride + 1;
    const std::int64_t wo = (w - k) / stride + 1;

    auto argmax = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(n * c * ho * wo));
    auto out = make_op({n, c, ho, wo}, {input}, [argmax](Tensor& self) {
        Tensor& x = *self.parents[0];
        if (!x.needs_grad) return;
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            x.grad[static_cast<std::size_t>((*argmax)[i])] += self.grad[i];
        }
    });

    std::size_t oi = 0;
    for (std::int64_t img = 0; img < n; ++img) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double* plane = input->data.data() + (img * c + ch) * h * w;
            const std::int64_t base = (img * c + ch) * h * w;
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                for (std::int64_t ow = 0; ow < wo; ++ow, ++oi) {
                    const std::int64_t h0 = oh * stride;
                    const std::int64_t w0 = ow * stride;
                    double best = plane[h0 * w + w0];
                    std::int64_t best_idx = h0 * w + w0;
                    for (int kh = 0; kh < k; ++kh) {
                        for (int kw = 0; kw < k; ++kw) {
                            const std::int64_t idx =
                                (h0 + kh) * w + (w0 + kw);
                            if (plane[idx] > best) { // ties keep the first
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out->data[oi] = best;
                    (*argmax)[oi] = base + best_idx;
                }
            }
        }
    }
    debug_check_finite(*out);
    return out;
}

TensorPtr softplus_normalize_rows(const TensorPtr& logits, double beta) {
    if (logits->shape.size() != 2 || logits->shape[1] < 2) {
        throw ShapeError("softplus_normalize_rows: expected [N, C>=2], got " +
                         logits->shape_str());
    }
    if (!(beta > 0.0)) {
        throw ContractError("softplus_normalize_rows: beta must be positive");
    }
    const std::int64_t n = logits->shape[0];
    const std::int64_t c = logits->shape[1];
    auto out = make_op(logits->shape, {logits}, [n, c, beta](Tensor& self) {
        Tensor& x = *self.parents[0];
        if (!x.needs_grad) return;
        x.ensure_grad();
        for (std::int64_t row = 0; row < n; ++row) {
            const double* xr = x.data.data() + row * c;
            const double* yr = self.data.data() + row * c;
            const double* gr = self.grad.data() + row * c;
            double total = 0.0;
            for (std::int64_t j = 0; j < c; ++j) {
                total += softplus_value(xr[j], beta);
            }
            double gdot = 0.0;
            for (std::int64_t j = 0; j < c; ++j) gdot += gr[j] * yr[j];
            double* gxr = x.grad.data() + row * c;
            for (std::int64_t j = 0; j < c; ++j) {
                gxr[j] +=
                    softplus_derivative(xr[j], beta) * (gr[j] - gdot) / total;
            }
        }
    });
    for (std::int64_t row = 0; row < n; ++row) {
        const double* xr = logits->data.data() + row * c;
        double* yr = out->data.data() + row * c;
        double total = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            yr[j] = softplus_value(xr[j], beta);
            total += yr[j];
        }
        for (std::int64_t j = 0; j < c; ++j) yr[j] /= total;
    }
    debug_check_finite(*out);
    return out;
}

void backward(const TensorPtr& root) {
    if (root->numel() != 1) {
        throw ContractError("backward: root " + root->shape_str() +
                            " is not scalar-shaped");
    }
    // Iterative post-order DFS gives reverse topological order.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next].get();
            ++next;
            if (p->needs_grad && !seen.count(p) && !p->parents.empty()) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior grads are scratch space for this pass; leaf grads persist so
    // repeated backward calls accumulate.
    for (Tensor* node : order) {
        if (!node->requires_grad) {
            node->ensure_grad();
            node->zero_grad();
        }
    }
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn && node->needs_grad) node->backward_fn(*node);
    }
}

void zero_grad(std::span<const TensorPtr> params) {
    for (const auto& p : params) p->zero_grad();
}

} // namespace bcnn
