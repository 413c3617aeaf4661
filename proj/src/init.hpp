// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "tensor.hpp"

namespace ald {

// (rows, cols) matrix with orthonormal rows or columns (whichever dimension
// is smaller), scaled by `gain`.
Tensor orthogonal_init(int64_t rows, int64_t cols, std::mt19937_64& rng, float gain = 1.0f);

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(int64_t fan_in, const Shape& shape, std::mt19937_64& rng);

Tensor normal_init(const Shape& shape, std::mt19937_64& rng, float stddev);

}  // namespace ald
