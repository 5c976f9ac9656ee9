#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dsconv/tensor.hpp"

namespace testing_support {

inline std::vector<float> random_values(std::size_t n, std::uint32_t seed, float lo = -1.0f,
                                        float hi = 1.0f) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> v(n);
    for (float& x : v) {
        x = dist(rng);
    }
    return v;
}

inline dsconv::Tensor4D random_tensor(const dsconv::Shape4& shape, std::uint32_t seed,
                                      float lo = -1.0f, float hi = 1.0f) {
    return dsconv::Tensor4D(shape,
                            random_values(static_cast<std::size_t>(shape.numel()), seed, lo, hi));
}

inline std::vector<float> gaussian_values(std::size_t n, std::uint32_t seed,
                                          float stddev = 1.0f) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> dist(0.0f, stddev);
    std::vector<float> v(n);
    for (float& x : v) {
        x = dist(rng);
    }
    return v;
}

// ||a - b||_2 / ||b||_2, computed in double; falls back to the absolute
// error norm when the reference is identically zero.
inline double rel_rms(std::span<const float> a, std::span<const float> b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        num += d * d;
        den += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (den == 0.0) {
        return std::sqrt(num);
    }
    return std::sqrt(num / den);
}

// Squared reconstruction error sum((wq_i*scale - w_i)^2) in double.
inline double block_l2_error(std::span<const float> w, std::span<const std::int8_t> wq,
                             double scale) {
    double err = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = static_cast<double>(wq[i]) * scale - static_cast<double>(w[i]);
        err += d * d;
    }
    return err;
}

}  // namespace testing_support
