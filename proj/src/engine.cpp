#include "dsconv/engine.hpp"

#include <bit>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>

#include "parallel.hpp"

namespace dsconv {
namespace {

std::int64_t ceil_log2(std::int64_t n) {
    assert(n >= 1);
    return std::bit_width(static_cast<std::uint64_t>(n - 1));
}

void check_finite_vector(std::span<const float> v, const char* what) {
    for (float x : v) {
        if (!std::isfinite(x)) {
            throw ValueError(std::string(what) + " values must be finite");
        }
    }
}

}  // namespace

DSConvLayer::DSConvLayer(Vqk vqk, Kds kds, std::vector<float> bias, QuantConfig cfg,
                         ConvParams params)
    : vqk_(std::move(vqk)),
      kds_(std::move(kds)),
      bias_(std::move(bias)),
      cfg_(cfg),
      params_(params) {
    cfg_.validate();
    if (params_.stride_h < 1 || params_.stride_w < 1 || params_.pad_h < 0 || params_.pad_w < 0) {
        throw ConfigError("invalid convolution parameters");
    }
    if (static_cast<std::int64_t>(vqk_.data.size()) != vqk_.shape.numel()) {
        throw ShapeError("VQK payload length does not match its shape");
    }
    if (!(kds_.shape == kds_shape(vqk_.shape, cfg_.block)) ||
        static_cast<std::int64_t>(kds_.data.size()) != kds_.shape.numel()) {
        throw ShapeError("KDS shape " + kds_.shape.str() + " does not match VQK " +
                         vqk_.shape.str() + " at block size " + std::to_string(cfg_.block));
    }
    if (static_cast<std::int64_t>(bias_.size()) != vqk_.shape[0]) {
        throw ShapeError("bias length " + std::to_string(bias_.size()) +
                         " does not match output channels " + std::to_string(vqk_.shape[0]));
    }
    check_finite_vector(kds_.data, "KDS");
    check_finite_vector(bias_, "bias");

    const int lo = -(1 << (cfg_.bits - 1));
    const int hi = (1 << (cfg_.bits - 1)) - 1;
    for (std::int8_t q : vqk_.data) {
        if (q < lo || q > hi) {
            throw ValueError("VQK value " + std::to_string(q) + " outside " +
                             std::to_string(cfg_.bits) + "-bit range");
        }
    }

    // Accumulator guard: every per-block integer dot product must fit a
    // 32-bit signed accumulator. Checked against the widest admissible
    // activation mantissa (8 bits) so no forward pass can overflow.
    const std::int64_t g = ceil_log2(std::min(cfg_.block, vqk_.shape[1]));
    if (2 * cfg_.bits + g > 31 || cfg_.bits + 8 + g > 32) {
        throw ConfigError("block size " + std::to_string(cfg_.block) + " at " +
                          std::to_string(cfg_.bits) + " bits exceeds the 32-bit accumulator");
    }
}

Tensor4D dsconv_forward(const DSConvLayer& layer, const BfpTensor& act, int threads,
                        MacCounts* macs) {
    const Vqk& vqk = layer.vqk();
    const Kds& kds = layer.kds();
    const QuantConfig& cfg = layer.cfg();
    if (act.bits < 2 || act.bits > 8) {
        throw ShapeError("activation mantissa width must be in 2..=8");
    }
    if (act.block != cfg.block) {
        throw ShapeError("activation block size " + std::to_string(act.block) +
                         " does not match layer block size " + std::to_string(cfg.block));
    }
    const Shape4 want_exp(1, block_count(act.shape[1], act.block), act.shape[2], act.shape[3]);
    if (act.shape[0] != 1 || !(act.exp_shape == want_exp) ||
        static_cast<std::int64_t>(act.mantissa.size()) != act.shape.numel() ||
        static_cast<std::int64_t>(act.exponent.size()) != act.exp_shape.numel()) {
        throw ShapeError("inconsistent BFP tensor layout");
    }
    check_mantissa_range(act);

    const Shape4 out_shape = conv_output_shape(act.shape, vqk.shape, layer.params());
    const ConvParams& p = layer.params();
    const std::int64_t c_out = vqk.shape[0];
    const std::int64_t c_in = vqk.shape[1];
    const std::int64_t k_h = vqk.shape[2];
    const std::int64_t k_w = vqk.shape[3];
    const std::int64_t in_h = act.shape[2];
    const std::int64_t in_w = act.shape[3];
    const std::int64_t out_h = out_shape[2];
    const std::int64_t out_w = out_shape[3];
    const std::int64_t nb = block_count(c_in, cfg.block);
    std::span<const float> bias = layer.bias();

    std::vector<float> out(static_cast<std::size_t>(out_shape.numel()));
    detail::parallel_for(c_out, threads, [&](std::int64_t co) {
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
            for (std::int64_t ow = 0; ow < out_w; ++ow) {
                float total = 0.0f;
                for (std::int64_t blk = 0; blk < nb; ++blk) {
                    const std::int64_t ci0 = blk * cfg.block;
                    const std::int64_t ci1 = std::min(ci0 + cfg.block, c_in);
                    for (std::int64_t kh = 0; kh < k_h; ++kh) {
                        const std::int64_t ih = oh * p.stride_h + kh - p.pad_h;
                        if (ih < 0 || ih >= in_h) continue;  // zero-padded taps contribute 0
                        for (std::int64_t kw = 0; kw < k_w; ++kw) {
                            const std::int64_t iw = ow * p.stride_w + kw - p.pad_w;
                            if (iw < 0 || iw >= in_w) continue;

                            std::int32_t acc = 0;
                            for (std::int64_t ci = ci0; ci < ci1; ++ci) {
                                const std::int32_t q = vqk.data[vqk.shape.index(co, ci, kh, kw)];
                                const std::int32_t m = act.mantissa[act.shape.index(0, ci, ih, iw)];
                                assert(static_cast<std::int64_t>(acc) + q * m <=
                                           std::numeric_limits<std::int32_t>::max() &&
                                       static_cast<std::int64_t>(acc) + q * m >=
                                           std::numeric_limits<std::int32_t>::min());
                                acc += q * m;
                            }
                            // Exponent merge: scaling the FP32 scale by a power
                            // of two is exact.
                            const float scale = std::ldexp(
                                kds.data[kds.shape.index(co, blk, kh, kw)],
                                act.exponent[act.exp_shape.index(0, blk, ih, iw)]);
                            total += static_cast<float>(acc) * scale;
                        }
                    }
                }
                out[out_shape.index(0, co, oh, ow)] =
                    total + bias[static_cast<std::size_t>(co)];
            }
        }
    });

    if (macs != nullptr) {
        const std::uint64_t positions = static_cast<std::uint64_t>(out_h * out_w);
        macs->int_macs += positions * static_cast<std::uint64_t>(c_out * c_in * k_h * k_w);
        macs->fp_macs += positions * static_cast<std::uint64_t>(c_out * nb * k_h * k_w);
    }
    return Tensor4D(out_shape, std::move(out));
}

std::pair<Kds, std::vector<float>> fold_bn(const Kds& kds, std::span<const float> bias,
                                           const BNParams& bn) {
    const std::int64_t c_out = kds.shape[0];
    const auto n = static_cast<std::size_t>(c_out);
    if (bn.gamma.size() != n || bn.beta.size() != n || bn.mean.size() != n ||
        bn.var.size() != n || bias.size() != n) {
        throw ShapeError("batch-norm parameter lengths do not match " + std::to_string(c_out) +
                         " output channels");
    }
    if (bn.eps < 0.0f) {
        throw ConfigError("batch-norm eps must be non-negative");
    }
    std::vector<double> factor(n);
    for (std::size_t o = 0; o < n; ++o) {
        if (bn.var[o] < 0.0f) {
            throw ValueError("batch-norm variance must be non-negative");
        }
        const double denom = static_cast<double>(bn.var[o]) + static_cast<double>(bn.eps);
        if (denom <= 0.0) {
            throw ValueError("batch-norm variance plus eps must be positive");
        }
        factor[o] = static_cast<double>(bn.gamma[o]) / std::sqrt(denom);
    }

    Kds folded{kds.shape, kds.data};
    const std::size_t per_filter = static_cast<std::size_t>(kds.shape.numel() / c_out);
    for (std::size_t o = 0; o < n; ++o) {
        for (std::size_t i = 0; i < per_filter; ++i) {
            const std::size_t idx = o * per_filter + i;
            folded.data[idx] = static_cast<float>(folded.data[idx] * factor[o]);
        }
    }
    std::vector<float> folded_bias(n);
    for (std::size_t o = 0; o < n; ++o) {
        folded_bias[o] = static_cast<float>(
            static_cast<double>(bn.beta[o]) +
            factor[o] * (static_cast<double>(bias[o]) - static_cast<double>(bn.mean[o])));
    }
    check_finite_vector(folded.data, "folded KDS");
    check_finite_vector(folded_bias, "folded bias");
    return {std::move(folded), std::move(folded_bias)};
}

DSConvLayer fold_bn(const DSConvLayer& layer, const BNParams& bn) {
    auto [kds, bias] = fold_bn(layer.kds(), layer.bias(), bn);
    return DSConvLayer(layer.vqk(), std::move(kds), std::move(bias), layer.cfg(), layer.params());
}

Tensor4D run_model(std::span<const DSConvLayer> layers, const Tensor4D& input,
                   const RunOptions& opts, MacCounts* macs) {
    if (layers.empty()) {
        throw ConfigError("model has no layers");
    }
    Tensor4D x = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Tensor4D cur = (i == 0 && !opts.relu_before_first) ? x : relu(x);
        const BfpTensor enc = bfp_encode_tensor(cur, opts.act_bits, layers[i].cfg().block);
        x = dsconv_forward(layers[i], enc, opts.threads, macs);
    }
    return x;
}

}  // namespace dsconv
