// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invnorm/layers.hpp"
#include "invnorm/squeeze.hpp"

namespace invnorm {

// Per-sample per-channel feature statistics (the "style" of Eq. style
// transfer readings): mean and the std actually used as denominator
// (floored at eps, so always > 0).
struct StyleStats {
    int batch = 0;
    int channels = 0;
    std::vector<float> mu;     // batch * channels
    std::vector<float> sigma;  // batch * channels
};

// Instance normalization with learnable affine: per sample and channel,
// out = gamma * (z - mu) / max(sigma, eps) + beta, statistics over spatial
// positions. This is the style-removal operator; it is not inverted.
class InstanceNorm {
public:
    InstanceNorm(int channels, float eps, const std::string& id_prefix);

    int channels() const { return gamma_.value.shape().c; }
    float eps() const { return eps_; }

    std::pair<Tensor, StyleStats> forward(const Tensor& z) const;
    Var apply(Tape& t, Var z);

    Param& gamma() { return gamma_; }
    Param& beta() { return beta_; }
    const Param& gamma() const { return gamma_; }
    const Param& beta() const { return beta_; }
    std::vector<Param*> params() { return {&gamma_, &beta_}; }
    std::size_t param_count() const { return gamma_.value.numel() + beta_.value.numel(); }

private:
    Param gamma_;
    Param beta_;
    float eps_ = 1e-5f;

    friend class ModelSerializer;
};

struct ModelConfig {
    int input_channels = 3;
    int flows_per_block = 5;
    int coupling_hidden = 32;
};

// The full invertible normalization transform: two blocks (squeeze plus
// flows_per_block flow steps each) composed with an instance-norm layer as
// encode -> normalize -> decode. Block 1 runs at 4*input_channels, block 2
// and the IN layer at 16*input_channels.
//
// Squeeze records for an in-flight encode/decode pair live in a SqueezeStack;
// the overloads without a stack use the model's internal one, which makes a
// model instance non-reentrant. forward() uses a local per-call stack, so an
// initialized model can serve concurrent forward() calls.
class InvNormModel {
public:
    struct EncodeResult {
        Tensor features;
        std::vector<double> logdet;  // per sample
    };
    struct ForwardResult {
        Tensor output;
        StyleStats stats;
        std::vector<double> logdet;  // per sample, encode contribution
    };

    static InvNormModel random_init(const ModelConfig& cfg, std::uint64_t seed);
    static InvNormModel identity_init(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    EncodeResult encode(const Tensor& x, SqueezeStack& stack);
    EncodeResult encode(const Tensor& x) { return encode(x, internal_stack_); }
    Tensor decode(const Tensor& z, SqueezeStack& stack) const;
    Tensor decode(const Tensor& z) { return decode(z, internal_stack_); }

    ForwardResult forward(const Tensor& x);

    // Taped full pipeline (encode -> IN -> decode) for training.
    Var apply(Tape& t, Var x);

    InstanceNorm& instance_norm() { return in_; }
    std::vector<FlowStep>& block1() { return block1_; }
    std::vector<FlowStep>& block2() { return block2_; }
    const InstanceNorm& instance_norm() const { return in_; }
    const std::vector<FlowStep>& block1() const { return block1_; }
    const std::vector<FlowStep>& block2() const { return block2_; }

    std::vector<Param*> params();
    std::size_t param_count() const;

private:
    InvNormModel(ModelConfig cfg, std::vector<FlowStep> b1, std::vector<FlowStep> b2,
                 InstanceNorm in_layer)
        : cfg_(cfg), block1_(std::move(b1)), block2_(std::move(b2)), in_(std::move(in_layer)) {}

    void check_encode_input(const Shape& sh) const;

    ModelConfig cfg_;
    std::vector<FlowStep> block1_;
    std::vector<FlowStep> block2_;
    InstanceNorm in_;
    SqueezeStack internal_stack_;

    friend class ModelSerializer;
};

}  // namespace invnorm
