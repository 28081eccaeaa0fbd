// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "invnorm/errors.hpp"

namespace invnorm {

// Dense NCHW shape. All four extents are >= 1 for a valid tensor.
struct Shape {
    int b = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(b) * c * h * w;
    }
    std::size_t spatial() const { return static_cast<std::size_t>(h) * w; }
    bool valid() const { return b >= 1 && c >= 1 && h >= 1 && w >= 1; }
    bool operator==(const Shape& o) const = default;
    std::string str() const;
};

// Immutable single-precision NCHW tensor. The payload lives behind a shared
// pointer, so copies are cheap and instances are safe to share across
// threads. New values are produced by the factory functions; there is no
// in-place mutation.
class Tensor {
public:
    Tensor() = default;

    // Checked construction: validates the shape, the element count and that
    // every value is finite.
    static Tensor from_data(const Shape& shape, std::vector<float> data);
    // Unchecked construction for internal kernels that already guarantee the
    // invariants.
    static Tensor from_data_unchecked(const Shape& shape, std::vector<float> data);
    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, float value);

    bool empty() const { return data_ == nullptr; }
    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return shape_.numel(); }
    const float* data() const { return data_->data(); }
    const std::vector<float>& vec() const { return *data_; }

    float at(int b, int c, int h, int w) const {
        return (*data_)[index(b, c, h, w)];
    }
    std::size_t index(int b, int c, int h, int w) const {
        return ((static_cast<std::size_t>(b) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    // True when every element is finite.
    bool all_finite() const;

private:
    Tensor(const Shape& shape, std::shared_ptr<const std::vector<float>> data)
        : shape_(shape), data_(std::move(data)) {}

    Shape shape_;
    std::shared_ptr<const std::vector<float>> data_;
};

// Max absolute elementwise difference; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);
// Bitwise equality of shape and payload.
bool bit_equal(const Tensor& a, const Tensor& b);
// L2 norm of the elementwise difference (double accumulation).
double l2_diff(const Tensor& a, const Tensor& b);

}  // namespace invnorm
