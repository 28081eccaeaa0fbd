// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "invnorm/tensor.hpp"

namespace invnorm {

// Per-call metadata that makes the squeeze exactly invertible on odd sizes.
struct SqueezeRecord {
    int orig_h = 0;
    int orig_w = 0;
    int pad_h = 0;  // orig_h mod 2
    int pad_w = 0;  // orig_w mod 2

    bool operator==(const SqueezeRecord&) const = default;
};

// Checkerboard squeeze: zero-pad H and W up to even (bottom row / right
// column), then move each 2x2 spatial block into four channels. The four
// sub-lattices (even-row/even-col, even-row/odd-col, odd-row/even-col,
// odd-row/odd-col) land in that order, grouped per source channel, so source
// channel c produces output channels 4c..4c+3. Output shape
// (B, 4C, ceil(H/2), ceil(W/2)). The map is a permutation with zero padding:
// log-det contribution is 0.
std::pair<Tensor, SqueezeRecord> squeeze_forward(const Tensor& x);

// Exact (bit-level) inverse on the non-padded region; the padded row/column
// is dropped. Throws ShapeError when the record is inconsistent with y.
Tensor squeeze_inverse(const Tensor& y, const SqueezeRecord& rec);

// LIFO context for nested squeeze calls (two per encode).
struct SqueezeStack {
    std::vector<SqueezeRecord> records;

    void push(const SqueezeRecord& r) { records.push_back(r); }
    SqueezeRecord pop();
    bool empty() const { return records.empty(); }
    void clear() { records.clear(); }
};

}  // namespace invnorm
