#include "dsconv/bfp.hpp"

#include <algorithm>
#include <cmath>

namespace dsconv {
namespace {

void check_bits(int bits) {
    if (bits < 2 || bits > 8) {
        throw ConfigError("mantissa width must be in 2..=8, got " + std::to_string(bits));
    }
}

}  // namespace

void check_mantissa_range(const BfpTensor& t) {
    const std::uint32_t limit = 1u << t.bits;
    for (std::uint8_t m : t.mantissa) {
        if (m >= limit) {
            throw ValueError("mantissa value " + std::to_string(m) + " outside " +
                             std::to_string(t.bits) + "-bit range");
        }
    }
}

namespace {

// Encodes one gathered block into m_out; returns the clamp count.
int encode_block(std::span<const float> x, int bits, std::uint8_t* m_out, std::int8_t& e_out) {
    float mx = 0.0f;
    for (float v : x) {
        if (!(v >= 0.0f) || !std::isfinite(v)) {
            throw ValueError("activation values must be non-negative and finite");
        }
        mx = std::max(mx, v);
    }
    if (mx == 0.0f) {
        std::fill_n(m_out, x.size(), std::uint8_t{0});
        e_out = 0;
        return 0;
    }

    int e = std::ilogb(mx) - (bits - 1);
    e = std::clamp(e, -128, 127);
    const long m_max = (1L << bits) - 1;
    int clamped = 0;
    bool any_nonzero = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = std::ldexp(static_cast<double>(x[i]), -e);
        long m = static_cast<long>(std::floor(v + 0.5));
        if (m > m_max) {
            m = m_max;
            ++clamped;
        }
        any_nonzero |= (m != 0);
        m_out[i] = static_cast<std::uint8_t>(m);
    }
    // Only possible when E was clamped at -128 and everything rounded away;
    // keep the all-zero-block convention of exponent 0.
    if (!any_nonzero) {
        e = 0;
    }
    e_out = static_cast<std::int8_t>(e);
    return clamped;
}

}  // namespace

BlockEncode bfp_encode(std::span<const float> x, int bits) {
    check_bits(bits);
    if (x.empty()) {
        throw ShapeError("empty block");
    }
    BlockEncode out;
    out.mantissa.resize(x.size());
    out.clamped = encode_block(x, bits, out.mantissa.data(), out.exponent);
    return out;
}

BfpTensor bfp_encode_tensor(const Tensor4D& x, int bits, std::int64_t block, EncodeStats* stats) {
    check_bits(bits);
    if (block < 1) {
        throw ConfigError("block size must be >= 1, got " + std::to_string(block));
    }
    const Shape4& shape = x.shape();
    if (shape[0] != 1) {
        throw ShapeError("activation batch extent must be 1, got " + shape.str());
    }
    const std::int64_t c = shape[1];
    const std::int64_t h = shape[2];
    const std::int64_t w = shape[3];
    const std::int64_t nb = block_count(c, block);

    BfpTensor out{bits, block, shape, Shape4(1, nb, h, w),
                  std::vector<std::uint8_t>(static_cast<std::size_t>(shape.numel())),
                  std::vector<std::int8_t>(static_cast<std::size_t>(nb * h * w))};

    std::vector<float> gathered;
    std::vector<std::uint8_t> encoded;
    std::uint64_t clamped = 0;
    for (std::int64_t blk = 0; blk < nb; ++blk) {
        const std::int64_t c0 = blk * block;
        const std::int64_t len = std::min(block, c - c0);
        gathered.resize(static_cast<std::size_t>(len));
        encoded.resize(static_cast<std::size_t>(len));
        for (std::int64_t ih = 0; ih < h; ++ih) {
            for (std::int64_t iw = 0; iw < w; ++iw) {
                for (std::int64_t i = 0; i < len; ++i) {
                    gathered[static_cast<std::size_t>(i)] = x(0, c0 + i, ih, iw);
                }
                std::int8_t e = 0;
                clamped += static_cast<std::uint64_t>(
                    encode_block(gathered, bits, encoded.data(), e));
                out.exponent[out.exp_shape.index(0, blk, ih, iw)] = e;
                for (std::int64_t i = 0; i < len; ++i) {
                    out.mantissa[shape.index(0, c0 + i, ih, iw)] =
                        encoded[static_cast<std::size_t>(i)];
                }
            }
        }
    }
    if (stats != nullptr) {
        stats->clamped += clamped;
    }
    return out;
}

Tensor4D bfp_decode(const BfpTensor& t) {
    check_bits(t.bits);
    if (t.block < 1) {
        throw ConfigError("block size must be >= 1");
    }
    const Shape4& shape = t.shape;
    const Shape4 want_exp(1, block_count(shape[1], t.block), shape[2], shape[3]);
    if (shape[0] != 1 || !(t.exp_shape == want_exp) ||
        static_cast<std::int64_t>(t.mantissa.size()) != shape.numel() ||
        static_cast<std::int64_t>(t.exponent.size()) != t.exp_shape.numel()) {
        throw ShapeError("inconsistent BFP tensor layout");
    }
    check_mantissa_range(t);

    std::vector<float> out(t.mantissa.size());
    for (std::int64_t ci = 0; ci < shape[1]; ++ci) {
        const std::int64_t blk = ci / t.block;
        for (std::int64_t ih = 0; ih < shape[2]; ++ih) {
            for (std::int64_t iw = 0; iw < shape[3]; ++iw) {
                const int e = t.exponent[t.exp_shape.index(0, blk, ih, iw)];
                const std::size_t idx = shape.index(0, ci, ih, iw);
                out[idx] = std::ldexp(static_cast<float>(t.mantissa[idx]), e);
            }
        }
    }
    return Tensor4D(shape, std::move(out));
}

}  // namespace dsconv
