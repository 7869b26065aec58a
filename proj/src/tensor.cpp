#include "capsnet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace capsnet {

namespace {

constexpr std::size_t kMaxRank = 4;

void check_finite(const std::vector<double>& data, const char* what) {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NonFiniteValue(std::string(what) + " produced a non-finite value");
        }
    }
}

} // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

bool shapes_equal(const Shape& a, const Shape& b) {
    return a == b;
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    if (shape_.size() > kMaxRank) {
        throw ShapeMismatch("tensor rank " + std::to_string(shape_.size()) + " exceeds maximum of 4");
    }
    for (std::size_t e : shape_) {
        if (e == 0) throw ShapeMismatch("tensor extents must be >= 1, got " + shape_str(shape_));
    }
    data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : Tensor(std::move(shape)) {
    if (data.size() != data_.size()) {
        throw ShapeMismatch("data length " + std::to_string(data.size()) + " does not match shape " +
                            shape_str(shape_));
    }
    check_finite(data, "tensor construction");
    data_ = std::move(data);
}

Tensor Tensor::scalar(double v) {
    return Tensor({}, {v});
}

Tensor Tensor::zeros(Shape shape) {
    return Tensor(std::move(shape));
}

Tensor Tensor::identity(std::size_t n) {
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 1.0;
    return Tensor({n, n}, std::move(out));
}

double Tensor::value() const {
    if (rank() != 0) throw ShapeMismatch("value() requires a rank-0 tensor, got " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::with_value(std::size_t flat, double v) const {
    if (flat >= data_.size()) throw ShapeMismatch("flat index out of range");
    std::vector<double> out(data_);
    out[flat] = v;
    return Tensor(shape_, std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) throw ShapeMismatch("matmul: left operand must be rank 2, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    if (b.rank() == 1) {
        if (b.shape()[0] != n) {
            throw ShapeMismatch("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
        }
        std::vector<double> out(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * b[j];
            out[i] = acc;
        }
        Tensor r({m}, std::move(out));
        return r;
    }
    if (b.rank() == 2) {
        if (b.shape()[0] != n) {
            throw ShapeMismatch("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
        }
        const std::size_t p = b.shape()[1];
        std::vector<double> out(m * p, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double aij = a[i * n + j];
                for (std::size_t k = 0; k < p; ++k) out[i * p + k] += aij * b[j * p + k];
            }
        }
        return Tensor({m, p}, std::move(out));
    }
    throw ShapeMismatch("matmul: right operand must be rank 1 or 2, got " + shape_str(b.shape()));
}

// im2col: gather every kh x kw patch of every channel into a column, so
// the whole convolution becomes one [k, c*kh*kw] x [c*kh*kw, oh*ow]
// product.
Tensor conv2d(const Tensor& input, const Tensor& kernels) {
    if (input.rank() != 3) {
        throw ShapeMismatch("conv2d: input must be rank 3 [c,h,w], got " + shape_str(input.shape()));
    }
    if (kernels.rank() != 4) {
        throw ShapeMismatch("conv2d: kernels must be rank 4 [k,c,kh,kw], got " + shape_str(kernels.shape()));
    }
    const std::size_t c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const std::size_t k = kernels.shape()[0], kc = kernels.shape()[1];
    const std::size_t kh = kernels.shape()[2], kw = kernels.shape()[3];
    if (kc != c) {
        throw ShapeMismatch("conv2d: channel extents differ, input " + shape_str(input.shape()) +
                            " vs kernels " + shape_str(kernels.shape()));
    }
    if (kh > h || kw > w) {
        throw ShapeMismatch("conv2d: kernel " + shape_str(kernels.shape()) + " larger than input " +
                            shape_str(input.shape()));
    }
    const std::size_t oh = h - kh + 1, ow = w - kw + 1;
    const std::size_t patch = c * kh * kw;

    std::vector<double> cols(patch * oh * ow);
    std::size_t row = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j, ++row) {
                for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t x = 0; x < ow; ++x) {
                        cols[row * (oh * ow) + y * ow + x] = input[ch * h * w + (y + i) * w + (x + j)];
                    }
                }
            }
        }
    }
    Tensor col_mat({patch, oh * ow}, std::move(cols));
    Tensor ker_mat = reshape(kernels, {k, patch});
    return reshape(matmul(ker_mat, col_mat), {k, oh, ow});
}

Tensor downsample(const Tensor& input, std::size_t window) {
    if (window == 0) throw ShapeMismatch("downsample: window must be >= 1");
    if (input.rank() != 3) {
        throw ShapeMismatch("downsample: input must be rank 3 [c,h,w], got " + shape_str(input.shape()));
    }
    const std::size_t c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    if (h % window != 0 || w % window != 0) {
        throw ShapeMismatch("downsample: window " + std::to_string(window) + " does not divide " +
                            shape_str(input.shape()));
    }
    const std::size_t oh = h / window, ow = w / window;
    std::vector<double> out(c * oh * ow);
    const double inv = 1.0 / static_cast<double>(window * window);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                // Mean as first + mean-of-deviations: exact for constant windows.
                const double first = input[ch * h * w + (y * window) * w + (x * window)];
                double dev = 0.0;
                for (std::size_t i = 0; i < window; ++i) {
                    for (std::size_t j = 0; j < window; ++j) {
                        dev += input[ch * h * w + (y * window + i) * w + (x * window + j)] - first;
                    }
                }
                out[ch * oh * ow + y * ow + x] = first + dev * inv;
            }
        }
    }
    return Tensor({c, oh, ow}, std::move(out));
}

Tensor reshape(const Tensor& input, Shape target) {
    if (shape_size(target) != input.size()) {
        throw ShapeMismatch("reshape: cannot reshape " + shape_str(input.shape()) + " to " +
                            shape_str(target) + " (element counts differ)");
    }
    return Tensor(std::move(target), std::vector<double>(input.data().begin(), input.data().end()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeMismatch("add: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return Tensor(a.shape(), std::move(out));
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
    return Tensor(a.shape(), std::move(out));
}

} // namespace capsnet
