#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsconv/error.hpp"

namespace dsconv {

// Extents of a rank-4 tensor stored row-major in (d0, d1, d2, d3) order.
// Weights are (out_channels, in_channels, kernel_h, kernel_w); activations
// are (1, channels, height, width).
class Shape4 {
public:
    Shape4(std::int64_t d0, std::int64_t d1, std::int64_t d2, std::int64_t d3);

    std::int64_t operator[](int axis) const {
        assert(axis >= 0 && axis < 4);
        return dims_[static_cast<std::size_t>(axis)];
    }
    std::int64_t numel() const { return numel_; }

    std::size_t index(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const {
        assert(contains(i0, i1, i2, i3));
        return static_cast<std::size_t>(((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3);
    }
    bool contains(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const {
        return i0 >= 0 && i0 < dims_[0] && i1 >= 0 && i1 < dims_[1] && i2 >= 0 &&
               i2 < dims_[2] && i3 >= 0 && i3 < dims_[3];
    }

    bool operator==(const Shape4& other) const { return dims_ == other.dims_; }
    std::string str() const;

private:
    std::array<std::int64_t, 4> dims_;
    std::int64_t numel_;
};

// One depth block of a tensor: elements (d0, d1_begin .. d1_begin+d1_len-1, d2, d3).
struct BlockSlice {
    std::int64_t d0 = 0;
    std::int64_t d1_begin = 0;
    std::int64_t d1_len = 1;
    std::int64_t d2 = 0;
    std::int64_t d3 = 0;
};

// Dense FP32 tensor. All values are validated finite at construction and the
// object never mutates afterwards, so instances are safe to share read-only
// between threads.
class Tensor4D {
public:
    Tensor4D(Shape4 shape, std::vector<float> data);
    static Tensor4D zeros(const Shape4& shape);

    const Shape4& shape() const { return shape_; }
    std::span<const float> values() const { return data_; }

    float operator()(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const {
        return data_[shape_.index(i0, i1, i2, i3)];
    }
    // Bounds-checked accessor.
    float at(std::int64_t i0, std::int64_t i1, std::int64_t i2, std::int64_t i3) const;

private:
    Shape4 shape_;
    std::vector<float> data_;
};

// Maximum of |value| over the slice; 0.0 for an all-zero slice.
float max_abs(const Tensor4D& t, const BlockSlice& slice);

Tensor4D relu(const Tensor4D& t);

// ceil(channels / block), the number of depth blocks per filter position.
std::int64_t block_count(std::int64_t channels, std::int64_t block);

}  // namespace dsconv
