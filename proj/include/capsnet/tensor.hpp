#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "capsnet/error.hpp"

namespace capsnet {

// Row-major extents. Rank 0 (empty shape) is a scalar.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shapes_equal(const Shape& a, const Shape& b);

// Dense n-dimensional array of doubles, rank 0 through 4, row-major.
// Immutable after construction; every factory and operation rejects
// non-finite values with NonFiniteValue.
class Tensor {
public:
    Tensor(); // rank-0 scalar holding 0.0
    explicit Tensor(Shape shape); // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor identity(std::size_t n); // [n,n] identity matrix

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::span<const double> data() const { return data_; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    // Rank-0 access.
    double value() const;

    // Copy with one flat entry replaced (gradient-check perturbations).
    Tensor with_value(std::size_t flat, double v) const;

    bool same_shape(const Tensor& other) const { return shapes_equal(shape_, other.shape_); }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Matrix product: [m,n] x [n] -> [m], or [m,n] x [n,p] -> [m,p].
Tensor matmul(const Tensor& a, const Tensor& b);

// Valid-mode cross-correlation: input [c,h,w], kernels [k,c,kh,kw]
// -> [k, h-kh+1, w-kw+1], summed over input channels.
Tensor conv2d(const Tensor& input, const Tensor& kernels);

// Mean over non-overlapping s x s windows, per channel:
// [c,h,w] -> [c,h/s,w/s]. A constant window averages to that constant
// exactly.
Tensor downsample(const Tensor& input, std::size_t window);

// Same flat data under a new shape; element counts must match.
Tensor reshape(const Tensor& input, Shape target);

// Elementwise plumbing.
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

template <typename F>
Tensor map(const Tensor& a, F&& fn) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
    return Tensor(a.shape(), std::move(out));
}

} // namespace capsnet
