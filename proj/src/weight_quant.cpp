#include "dsconv/weight_quant.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace dsconv {
namespace {

void check_finite(std::span<const float> w) {
    for (float v : w) {
        if (!std::isfinite(v)) {
            throw ValueError("block values must be finite");
        }
    }
}

double l2_scale_impl(std::span<const float> w, std::span<const std::int8_t> wq) {
    if (w.size() != wq.size()) {
        throw ShapeError("block and quantized block differ in length");
    }
    if (w.empty()) {
        throw ShapeError("empty block");
    }
    check_finite(w);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double q = static_cast<double>(wq[i]);
        num += static_cast<double>(w[i]) * q;
        den += q * q;
    }
    if (den == 0.0) {
        throw DegenerateBlockError("cannot fit a scale to an all-zero quantized block");
    }
    return num / den;
}

// KL(softmax(w) || softmax(scale*wq)), evaluated in double with the usual
// max-subtraction stabilization.
class KlObjective {
public:
    KlObjective(std::span<const float> w, std::span<const std::int8_t> wq) : wq_(wq) {
        const double wmax = *std::max_element(w.begin(), w.end());
        double z = 0.0;
        t_.reserve(w.size());
        for (float v : w) {
            t_.push_back(std::exp(static_cast<double>(v) - wmax));
            z += t_.back();
        }
        for (double& t : t_) {
            t /= z;
        }
    }

    double operator()(double scale) const {
        double lmax = -std::numeric_limits<double>::infinity();
        for (std::int8_t q : wq_) {
            lmax = std::max(lmax, scale * static_cast<double>(q));
        }
        double z = 0.0;
        for (std::int8_t q : wq_) {
            z += std::exp(scale * static_cast<double>(q) - lmax);
        }
        const double logz = std::log(z) + lmax;
        double kl = 0.0;
        for (std::size_t i = 0; i < t_.size(); ++i) {
            const double logit = scale * static_cast<double>(wq_[i]);
            kl += t_[i] * (std::log(t_[i]) - (logit - logz));
        }
        return kl;
    }

private:
    std::span<const std::int8_t> wq_;
    std::vector<double> t_;
};

}  // namespace

void QuantConfig::validate() const {
    if (bits < 2 || bits > 8) {
        throw ConfigError("bit width must be in 2..=8, got " + std::to_string(bits));
    }
    if (block < 1) {
        throw ConfigError("block size must be >= 1, got " + std::to_string(block));
    }
}

BlockQuant quantize_block(std::span<const float> w, int bits) {
    if (bits < 2 || bits > 8) {
        throw ConfigError("bit width must be in 2..=8, got " + std::to_string(bits));
    }
    if (w.empty()) {
        throw ShapeError("empty block");
    }
    check_finite(w);

    BlockQuant out;
    out.wq.resize(w.size(), 0);
    out.scale = 0.0f;

    double w_m = 0.0;
    for (float v : w) {
        w_m = std::max(w_m, static_cast<double>(std::fabs(v)));
    }
    if (w_m == 0.0) {
        return out;  // all-zero block: wq = 0, scale = 0
    }

    const int m = (1 << (bits - 1)) - 1;
    const double s = static_cast<double>(m) / w_m;
    for (std::size_t i = 0; i < w.size(); ++i) {
        // lround rounds halfway cases away from zero.
        const long q = std::lround(static_cast<double>(w[i]) * s);
        assert(std::labs(q) <= m);
        out.wq[i] = static_cast<std::int8_t>(q);
    }
    out.scale = static_cast<float>(l2_scale_impl(w, out.wq));
    return out;
}

float l2_fit_scale(std::span<const float> w, std::span<const std::int8_t> wq) {
    return static_cast<float>(l2_scale_impl(w, wq));
}

float kl_fit_scale(std::span<const float> w, std::span<const std::int8_t> wq) {
    double hi = 4.0 * l2_scale_impl(w, wq);
    if (hi <= 0.0) {
        hi = 1.0;  // not reachable for blocks rounded by quantize_block
    }
    const KlObjective kl(w, wq);

    // A constant block makes softmax(scale*wq) uniform for every scale; the
    // objective is then flat and the lower bracket endpoint is returned.
    double lo = 0.0;
    {
        double fmin = std::numeric_limits<double>::infinity();
        double fmax = -fmin;
        for (double x : {lo, lo + (hi - lo) / 3.0, lo + 2.0 * (hi - lo) / 3.0, hi}) {
            const double f = kl(x);
            fmin = std::min(fmin, f);
            fmax = std::max(fmax, f);
        }
        if (fmax - fmin <= 1e-15) {
            return static_cast<float>(lo);
        }
    }

    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = hi - kInvPhi * (hi - lo);
    double x2 = lo + kInvPhi * (hi - lo);
    double f1 = kl(x1);
    double f2 = kl(x2);
    for (int iter = 0; iter < 200 && (hi - lo) > 1e-9; ++iter) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kInvPhi * (hi - lo);
            f1 = kl(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kInvPhi * (hi - lo);
            f2 = kl(x2);
        }
    }
    return static_cast<float>(0.5 * (lo + hi));
}

Shape4 kds_shape(const Shape4& weights, std::int64_t block) {
    return Shape4(weights[0], block_count(weights[1], block), weights[2], weights[3]);
}

QuantizedWeights quantize_weights(const Tensor4D& w, const QuantConfig& cfg, ScaleFit fit) {
    cfg.validate();
    const Shape4& shape = w.shape();
    const std::int64_t c_out = shape[0];
    const std::int64_t c_in = shape[1];
    const std::int64_t k_h = shape[2];
    const std::int64_t k_w = shape[3];
    const std::int64_t nb = block_count(c_in, cfg.block);

    QuantizedWeights out{
        Vqk{shape, std::vector<std::int8_t>(static_cast<std::size_t>(shape.numel()))},
        Kds{kds_shape(shape, cfg.block),
            std::vector<float>(static_cast<std::size_t>(kds_shape(shape, cfg.block).numel()))}};

    std::vector<float> block_values;
    for (std::int64_t co = 0; co < c_out; ++co) {
        for (std::int64_t blk = 0; blk < nb; ++blk) {
            const std::int64_t ci0 = blk * cfg.block;
            const std::int64_t len = std::min(cfg.block, c_in - ci0);
            for (std::int64_t kh = 0; kh < k_h; ++kh) {
                for (std::int64_t kw = 0; kw < k_w; ++kw) {
                    block_values.clear();
                    for (std::int64_t i = 0; i < len; ++i) {
                        block_values.push_back(w(co, ci0 + i, kh, kw));
                    }
                    BlockQuant q = quantize_block(block_values, cfg.bits);
                    if (fit == ScaleFit::KL && q.scale != 0.0f) {
                        q.scale = kl_fit_scale(block_values, q.wq);
                    }
                    for (std::int64_t i = 0; i < len; ++i) {
                        out.vqk.data[shape.index(co, ci0 + i, kh, kw)] =
                            q.wq[static_cast<std::size_t>(i)];
                    }
                    out.kds.data[out.kds.shape.index(co, blk, kh, kw)] = q.scale;
                }
            }
        }
    }
    return out;
}

Tensor4D dequantize(const Vqk& vqk, const Kds& kds, const QuantConfig& cfg) {
    cfg.validate();
    if (!(kds.shape == kds_shape(vqk.shape, cfg.block))) {
        throw ShapeError("KDS shape " + kds.shape.str() + " does not match VQK " +
                         vqk.shape.str() + " at block size " + std::to_string(cfg.block));
    }
    if (static_cast<std::int64_t>(vqk.data.size()) != vqk.shape.numel() ||
        static_cast<std::int64_t>(kds.data.size()) != kds.shape.numel()) {
        throw ShapeError("VQK/KDS payload lengths do not match their shapes");
    }

    std::vector<float> out(vqk.data.size());
    const Shape4& shape = vqk.shape;
    for (std::int64_t co = 0; co < shape[0]; ++co) {
        for (std::int64_t ci = 0; ci < shape[1]; ++ci) {
            const std::int64_t blk = ci / cfg.block;
            for (std::int64_t kh = 0; kh < shape[2]; ++kh) {
                for (std::int64_t kw = 0; kw < shape[3]; ++kw) {
                    const float scale = kds.data[kds.shape.index(co, blk, kh, kw)];
                    out[shape.index(co, ci, kh, kw)] =
                        scale * static_cast<float>(vqk.data[shape.index(co, ci, kh, kw)]);
                }
            }
        }
    }
    return Tensor4D(shape, std::move(out));
}

}  // namespace dsconv
