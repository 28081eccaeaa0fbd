// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "invnorm/errors.hpp"
#include "invnorm/tensor.hpp"

namespace invnorm {

// A learnable value plus its accumulated gradient. The gradient buffer is
// empty ("null") until a backward pass touches the parameter, and then
// accumulates additively until zero_grad() is called. Single writer: the
// training loop owns mutation.
struct Param {
    std::string id;
    Tensor value;
    std::vector<float> grad;  // empty until populated; numel() of value once set

    Param() = default;
    Param(std::string id_, Tensor value_) : id(std::move(id_)), value(std::move(value_)) {}

    bool has_grad() const { return !grad.empty(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.numel(), 0.0f);
    }

    void accumulate_grad(const float* g, std::size_t n) {
        if (n != value.numel()) {
            throw ShapeError("gradient size mismatch for param '" + id + "'");
        }
        ensure_grad();
        for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
    }

    void zero_grad() { grad.clear(); }

    Tensor grad_tensor() const {
        if (grad.empty()) {
            throw StateError("param '" + id + "' has no gradient");
        }
        return Tensor::from_data_unchecked(value.shape(), grad);
    }
};

}  // namespace invnorm
