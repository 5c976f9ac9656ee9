#include "dsconv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsconv {

Shape4::Shape4(std::int64_t d0, std::int64_t d1, std::int64_t d2, std::int64_t d3)
    : dims_{d0, d1, d2, d3}, numel_(1) {
    for (std::int64_t d : dims_) {
        if (d < 1) {
            throw ShapeError("tensor extents must be >= 1, got " + str());
        }
        if (numel_ > std::numeric_limits<std::int64_t>::max() / d) {
            throw ShapeError("tensor element count overflows: " + str());
        }
        numel_ *= d;
    }
}

std::string Shape4::str() const {
    std::string s = "(";
    for (int i = 0; i < 4; ++i) {
        s += std::to_string(dims_[static_cast<std::size_t>(i)]);
        s += (i == 3) ? ")" : ", ";
    }
    return s;
}

Tensor4D::Tensor4D(Shape4 shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
    for (float v : data_) {
        if (!std::isfinite(v)) {
            throw ValueError("tensor values must be finite");
        }
    }
}

Tensor4D Tensor4D::zeros(const Shape4& shape) {
    return Tensor4D(shape, std::vector<float>(static_cast<std::size_t>(shape.numel()), 0.0f));
}

float Tensor4D::at(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const {
    if (!shape_.contains(i0, i1, i2, i3)) {
        throw ShapeError("index out of bounds for shape " + shape_.str());
    }
    return (*this)(i0, i1, i2, i3);
}

float max_abs(const Tensor4D& t, const BlockSlice& slice) {
    const Shape4& s = t.shape();
    if (slice.d1_len < 1 || !s.contains(slice.d0, slice.d1_begin, slice.d2, slice.d3) ||
        slice.d1_begin + slice.d1_len > s[1]) {
        throw ShapeError("block slice out of bounds for shape " + s.str());
    }
    float m = 0.0f;
    for (std::int64_t i = 0; i < slice.d1_len; ++i) {
        m = std::max(m, std::fabs(t(slice.d0, slice.d1_begin + i, slice.d2, slice.d3)));
    }
    return m;
}

Tensor4D relu(const Tensor4D& t) {
    std::vector<float> out(t.values().begin(), t.values().end());
    for (float& v : out) {
        v = std::max(v, 0.0f);
    }
    return Tensor4D(t.shape(), std::move(out));
}

std::int64_t block_count(std::int64_t channels, std::int64_t block) {
    if (channels < 1 || block < 1) {
        throw ConfigError("channels and block size must be positive");
    }
    return (channels + block - 1) / block;
}

}  // namespace dsconv
