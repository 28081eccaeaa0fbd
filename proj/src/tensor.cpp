// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace invnorm {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << b << "," << c << "," << h << "," << w << ")";
    return os.str();
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> data) {
    if (!shape.valid()) {
        throw ShapeError("invalid tensor shape " + shape.str());
    }
    if (data.size() != shape.numel()) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
    }
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite value in tensor of shape " + shape.str());
        }
    }
    return Tensor(shape, std::make_shared<const std::vector<float>>(std::move(data)));
}

Tensor Tensor::from_data_unchecked(const Shape& shape, std::vector<float> data) {
    return Tensor(shape, std::make_shared<const std::vector<float>>(std::move(data)));
}

Tensor Tensor::zeros(const Shape& shape) {
    if (!shape.valid()) {
        throw ShapeError("invalid tensor shape " + shape.str());
    }
    return from_data_unchecked(shape, std::vector<float>(shape.numel(), 0.0f));
}

Tensor Tensor::full(const Shape& shape, float value) {
    if (!shape.valid()) {
        throw ShapeError("invalid tensor shape " + shape.str());
    }
    return from_data_unchecked(shape, std::vector<float>(shape.numel(), value));
}

bool Tensor::all_finite() const {
    for (float v : *data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError("max_abs_diff: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
    float m = 0.0f;
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::fabs(pa[i] - pb[i]));
    }
    return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) return false;
    return std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0;
}

double l2_diff(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError("l2_diff: shape mismatch");
    }
    double acc = 0.0;
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(pa[i]) - pb[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace invnorm
