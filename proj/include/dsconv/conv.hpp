#pragma once

#include <cstdint>
#include <span>

#include "dsconv/tensor.hpp"

namespace dsconv {

struct ConvParams {
    std::int64_t stride_h = 1;
    std::int64_t stride_w = 1;
    std::int64_t pad_h = 0;
    std::int64_t pad_w = 0;
};

// Output shape of a convolution of `input` (1, C_i, H, W) with `weights`
// (C_o, C_i, K_h, K_w). Throws ConfigError for non-positive strides or
// negative padding, ShapeError when channels disagree or the output would
// be empty.
Shape4 conv_output_shape(const Shape4& input, const Shape4& weights, const ConvParams& params);

// Direct cross-correlation with zero padding, the full-precision oracle for
// the integer path. Per output element the accumulation order is fixed:
// input channel major, then kernel row, then kernel column, bias added last.
// That makes results bit-reproducible independent of `threads`, which only
// splits work across output channels.
Tensor4D fp_conv_reference(const Tensor4D& input, const Tensor4D& weights,
                           std::span<const float> bias, const ConvParams& params,
                           int threads = 1);

}  // namespace dsconv
