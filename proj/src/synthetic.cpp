#include "dsconv/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace dsconv {

Tensor4D gaussian_tensor(const Shape4& shape, std::uint64_t seed, float mean, float stddev,
                         bool nonneg) {
    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
    const auto uniform01 = [&rng] {
        // 24 high bits -> [0, 1); mt19937 output is fully specified, so the
        // stream is identical across platforms.
        return (rng() >> 8) * (1.0 / 16777216.0);
    };

    std::vector<float> data(static_cast<std::size_t>(shape.numel()));
    for (std::size_t i = 0; i < data.size(); i += 2) {
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        data[i] = static_cast<float>(mean + stddev * r * std::cos(angle));
        if (i + 1 < data.size()) {
            data[i + 1] = static_cast<float>(mean + stddev * r * std::sin(angle));
        }
    }
    if (nonneg) {
        for (float& v : data) {
            v = std::fabs(v);
        }
    }
    return Tensor4D(shape, std::move(data));
}

}  // namespace dsconv
