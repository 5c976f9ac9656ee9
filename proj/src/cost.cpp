#include "dsconv/cost.hpp"

#include <algorithm>

namespace dsconv {
namespace {

void check_positive(std::int64_t c_in, std::int64_t block) {
    if (c_in < 1 || block < 1) {
        throw ConfigError("channel count and block size must be positive");
    }
}

}  // namespace

double memory_saving(std::int64_t c_in, std::int64_t block, int bits) {
    check_positive(c_in, block);
    if (bits < 1) {
        throw ConfigError("bit width must be positive");
    }
    const std::int64_t nb = block_count(c_in, block);
    return static_cast<double>(bits) / 32.0 +
           static_cast<double>(nb) / static_cast<double>(c_in);
}

double speed_ratio_threshold(std::int64_t c_in, std::int64_t block, double eta) {
    check_positive(c_in, block);
    if (eta < 0.0) {
        throw ConfigError("eta must be non-negative");
    }
    if (c_in % block == 0) {
        return (1.0 - 1.0 / static_cast<double>(block)) / (1.0 + eta);
    }
    const std::int64_t nb = block_count(c_in, block);
    return static_cast<double>(c_in - nb) / (static_cast<double>(c_in) * (1.0 + eta));
}

double max_speedup(std::int64_t c_in, std::int64_t block) {
    check_positive(c_in, block);
    return static_cast<double>(std::min(c_in, block));
}

MacModel mac_counts(const Shape4& weights, std::int64_t block, std::int64_t out_h,
                    std::int64_t out_w) {
    check_positive(weights[1], block);
    if (out_h < 1 || out_w < 1) {
        throw ConfigError("output extents must be positive");
    }
    MacModel m;
    const std::uint64_t taps = static_cast<std::uint64_t>(weights[2] * weights[3]);
    m.int_per_position = static_cast<std::uint64_t>(weights[1]) * taps;
    m.fp_per_position = static_cast<std::uint64_t>(block_count(weights[1], block)) * taps;
    const std::uint64_t repeat = static_cast<std::uint64_t>(weights[0] * out_h * out_w);
    m.int_total = m.int_per_position * repeat;
    m.fp_total = m.fp_per_position * repeat;
    return m;
}

CostReport cost_report(const Shape4& weights, std::int64_t block, int bits, double eta,
                       std::int64_t out_h, std::int64_t out_w) {
    CostReport r;
    r.memory_saving = memory_saving(weights[1], block, bits);
    r.macs = mac_counts(weights, block, out_h, out_w);
    r.speed_ratio_threshold = speed_ratio_threshold(weights[1], block, eta);
    r.max_speedup = max_speedup(weights[1], block);
    r.eta = eta;
    return r;
}

}  // namespace dsconv
