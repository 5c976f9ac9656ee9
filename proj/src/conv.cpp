#include "dsconv/conv.hpp"

#include <vector>

#include "parallel.hpp"

namespace dsconv {

Shape4 conv_output_shape(const Shape4& input, const Shape4& weights, const ConvParams& params) {
    if (params.stride_h < 1 || params.stride_w < 1) {
        throw ConfigError("stride must be positive");
    }
    if (params.pad_h < 0 || params.pad_w < 0) {
        throw ConfigError("padding must be non-negative");
    }
    if (input[0] != 1) {
        throw ShapeError("activation batch extent must be 1, got " + input.str());
    }
    if (input[1] != weights[1]) {
        throw ShapeError("input channels " + std::to_string(input[1]) +
                         " do not match weight channels " + std::to_string(weights[1]));
    }
    const std::int64_t out_h = (input[2] + 2 * params.pad_h - weights[2]) / params.stride_h + 1;
    const std::int64_t out_w = (input[3] + 2 * params.pad_w - weights[3]) / params.stride_w + 1;
    if (input[2] + 2 * params.pad_h < weights[2] || input[3] + 2 * params.pad_w < weights[3] ||
        out_h < 1 || out_w < 1) {
        throw ShapeError("convolution of " + input.str() + " with " + weights.str() +
                         " yields an empty output");
    }
    return Shape4(1, weights[0], out_h, out_w);
}

Tensor4D fp_conv_reference(const Tensor4D& input, const Tensor4D& weights,
                           std::span<const float> bias, const ConvParams& params,
                           int threads) {
    const Shape4 out_shape = conv_output_shape(input.shape(), weights.shape(), params);
    const std::int64_t c_out = weights.shape()[0];
    const std::int64_t c_in = weights.shape()[1];
    const std::int64_t k_h = weights.shape()[2];
    const std::int64_t k_w = weights.shape()[3];
    const std::int64_t in_h = input.shape()[2];
    const std::int64_t in_w = input.shape()[3];
    const std::int64_t out_h = out_shape[2];
    const std::int64_t out_w = out_shape[3];
    if (static_cast<std::int64_t>(bias.size()) != c_out) {
        throw ShapeError("bias length " + std::to_string(bias.size()) +
                         " does not match output channels " + std::to_string(c_out));
    }

    std::vector<float> out(static_cast<std::size_t>(out_shape.numel()));
    detail::parallel_for(c_out, threads, [&](std::int64_t co) {
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
            for (std::int64_t ow = 0; ow < out_w; ++ow) {
                float acc = 0.0f;
                for (std::int64_t ci = 0; ci < c_in; ++ci) {
                    for (std::int64_t kh = 0; kh < k_h; ++kh) {
                        const std::int64_t ih = oh * params.stride_h + kh - params.pad_h;
                        if (ih < 0 || ih >= in_h) continue;
                        for (std::int64_t kw = 0; kw < k_w; ++kw) {
                            const std::int64_t iw = ow * params.stride_w + kw - params.pad_w;
                            if (iw < 0 || iw >= in_w) continue;
                            acc += input(0, ci, ih, iw) * weights(co, ci, kh, kw);
                        }
                    }
                }
                out[out_shape.index(0, co, oh, ow)] = acc + bias[static_cast<std::size_t>(co)];
            }
        }
    });
    return Tensor4D(out_shape, std::move(out));
}

}  // namespace dsconv
