// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/rng.hpp"

namespace invnorm {

Tensor random_uniform(const Shape& shape, Rng& rng, float lo, float hi) {
    std::vector<float> v(shape.numel());
    for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return Tensor::from_data_unchecked(shape, std::move(v));
}

Tensor random_normal(const Shape& shape, Rng& rng, float mean, float stddev) {
    std::vector<float> v(shape.numel());
    for (float& x : v) x = static_cast<float>(rng.normal(mean, stddev));
    return Tensor::from_data_unchecked(shape, std::move(v));
}

}  // namespace invnorm
