#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsconv/tensor.hpp"

namespace dsconv {

// Block-floating-point activation tensor: b-bit unsigned mantissas at the
// activation shape plus one signed 8-bit exponent per depth block per
// spatial position. Decoded value of an element is mantissa * 2^exponent.
struct BfpTensor {
    int bits;
    std::int64_t block;
    Shape4 shape;      // (1, C, H, W) mantissa extents
    Shape4 exp_shape;  // (1, ceil(C/B), H, W)
    std::vector<std::uint8_t> mantissa;
    std::vector<std::int8_t> exponent;
};

struct BlockEncode {
    std::vector<std::uint8_t> mantissa;
    std::int8_t exponent;
    int clamped;  // elements whose rounded mantissa overflowed 2^b - 1
};

struct EncodeStats {
    std::uint64_t clamped = 0;
};

// Encodes one depth block of non-negative values. The shared exponent is
// E = floor(log2(max)) - (b-1), placing the block maximum's mantissa in
// [2^(b-1), 2^b); mantissas are floor(x/2^E + 1/2) with ties rounding up,
// clamped to 2^b - 1. An all-zero block encodes as mantissas 0, exponent 0.
// E is clamped to the signed 8-bit range; if every mantissa rounds to zero
// the exponent is normalized back to 0.
BlockEncode bfp_encode(std::span<const float> x, int bits);

// Block-wise encoding of a (1, C, H, W) activation tensor, blocks along the
// channel axis. Requires non-negative input (post-ReLU domain).
BfpTensor bfp_encode_tensor(const Tensor4D& x, int bits, std::int64_t block,
                            EncodeStats* stats = nullptr);

// Exact inverse scaling mantissa * 2^exponent.
Tensor4D bfp_decode(const BfpTensor& t);

// Throws ValueError if any mantissa is >= 2^bits.
void check_mantissa_range(const BfpTensor& t);

}  // namespace dsconv
