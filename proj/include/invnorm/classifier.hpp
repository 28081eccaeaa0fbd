// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "invnorm/param.hpp"
#include "invnorm/tape.hpp"

namespace invnorm {

struct ClassifierConfig {
    int in_channels = 3;
    int classes = 5;
    int width1 = 16;
    int width2 = 32;
    int width3 = 64;
};

// Small CNN head used by the leave-one-domain harness: three conv3x3 +
// ReLU + 2x2 average-pool stages, global average pooling, linear logits.
// Input H and W must be divisible by 8.
class SmallCnn {
public:
    SmallCnn(const ClassifierConfig& cfg, std::uint64_t seed);

    const ClassifierConfig& config() const { return cfg_; }

    Tensor logits(const Tensor& x) const;
    Var apply(Tape& t, Var x);

    std::vector<Param*> params() { return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_, &fw_, &fb_}; }
    std::size_t param_count() const;

private:
    ClassifierConfig cfg_;
    Param w1_, b1_, w2_, b2_, w3_, b3_, fw_, fb_;

    friend class HarnessSerializer;
};

}  // namespace invnorm
