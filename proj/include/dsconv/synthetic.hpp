#pragma once

#include <cstdint>

#include "dsconv/tensor.hpp"

namespace dsconv {

// Seeded Gaussian tensor generator (Box-Muller over mt19937), so tests and
// the CLI can fabricate weights and activations with zero external data.
// With nonneg set, values are folded to their absolute value to mimic the
// post-ReLU activation domain.
Tensor4D gaussian_tensor(const Shape4& shape, std::uint64_t seed, float mean = 0.0f,
                         float stddev = 1.0f, bool nonneg = false);

}  // namespace dsconv
