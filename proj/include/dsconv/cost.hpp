#pragma once

#include <cstdint>

#include "dsconv/tensor.hpp"

namespace dsconv {

// Fraction of the FP32 weight memory kept after quantization:
// p = b/32 + ceil(C_i/B)/C_i (integer kernel plus per-block scales).
double memory_saving(std::int64_t c_in, std::int64_t block, int bits);

// Largest T_int/T_FP ratio at which the integer path still wins:
// (1 - 1/B)/(1 + eta) when B divides C_i, the general
// (C_i - ceil(C_i/B)) / (C_i * (1 + eta)) otherwise.
double speed_ratio_threshold(std::int64_t c_in, std::int64_t block, double eta = 0.0);

// Upper bound on the speedup over a full-FP convolution: min(C_i, B).
double max_speedup(std::int64_t c_in, std::int64_t block);

struct MacModel {
    // Per filter per output position.
    std::uint64_t int_per_position = 0;
    std::uint64_t fp_per_position = 0;
    // Totals over all filters and output positions.
    std::uint64_t int_total = 0;
    std::uint64_t fp_total = 0;
};

// INT and FP multiply-accumulate counts for a convolution of the given
// weight shape: the tensor size gives the INT MACs, the block count the FP
// MACs.
MacModel mac_counts(const Shape4& weights, std::int64_t block, std::int64_t out_h,
                    std::int64_t out_w);

struct CostReport {
    double memory_saving = 0.0;
    MacModel macs;
    double speed_ratio_threshold = 0.0;
    double max_speedup = 0.0;
    double eta = 0.0;
};

CostReport cost_report(const Shape4& weights, std::int64_t block, int bits, double eta,
                       std::int64_t out_h, std::int64_t out_w);

}  // namespace dsconv
