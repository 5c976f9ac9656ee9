#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsconv/tensor.hpp"

namespace dsconv {

// Quantization hyperparameters: integer/mantissa width b and depth block
// size B. One scale (weights) or one exponent (activations) is shared per
// block of B consecutive channels.
struct QuantConfig {
    int bits = 4;
    std::int64_t block = 64;

    // Throws ConfigError unless 2 <= bits <= 8 and block >= 1.
    void validate() const;
};

// b-bit integer weight tensor, same shape as its FP source. Every value
// satisfies -2^(b-1) <= v <= 2^(b-1)-1; the quantizer is symmetric and only
// ever emits |v| <= 2^(b-1)-1.
struct Vqk {
    Shape4 shape;
    std::vector<std::int8_t> data;
};

// Per-block FP32 scale tensor of shape (C_o, ceil(C_i/B), K_h, K_w). A block
// whose source weights are all zero carries scale 0.
struct Kds {
    Shape4 shape;
    std::vector<float> data;
};

struct QuantizedWeights {
    Vqk vqk;
    Kds kds;
};

enum class ScaleFit {
    L2,  // closed-form least-squares scale (default)
    KL,  // scale minimizing the KL divergence between softmax distributions
};

struct BlockQuant {
    std::vector<std::int8_t> wq;
    float scale;
};

// Quantizes one depth block: stretch by m/max|w| with m = 2^(b-1)-1, round
// half away from zero, then fit the least-squares scale
// sum(w_i*wq_i) / sum(wq_i^2). An all-zero block yields wq = 0 and scale 0.
BlockQuant quantize_block(std::span<const float> w, int bits);

// Closed-form least-squares scale for an already rounded block.
// Throws DegenerateBlockError when wq is all zero.
float l2_fit_scale(std::span<const float> w, std::span<const std::int8_t> wq);

// Scale minimizing KL(softmax(w) || softmax(scale*wq)), found by golden
// section search over [0, 4*l2_fit_scale] to absolute tolerance 1e-7.
// A flat objective (e.g. a constant block, where every scale produces the
// same softmax) deterministically returns the lower bracket endpoint 0.
float kl_fit_scale(std::span<const float> w, std::span<const std::int8_t> wq);

// Shape of the scale tensor for the given weight shape and block size.
Shape4 kds_shape(const Shape4& weights, std::int64_t block);

// Splits a weight tensor into integer kernel and per-block scales. Blocks run
// along the depth (C_i) axis; a trailing block shorter than B is fit over its
// actual length.
QuantizedWeights quantize_weights(const Tensor4D& w, const QuantConfig& cfg,
                                  ScaleFit fit = ScaleFit::L2);

// Reconstruction w_hat = scale_block * wq, elementwise.
Tensor4D dequantize(const Vqk& vqk, const Kds& kds, const QuantConfig& cfg);

}  // namespace dsconv
