// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "invnorm/param.hpp"
#include "invnorm/rng.hpp"
#include "invnorm/tape.hpp"
#include "invnorm/tensor.hpp"

namespace invnorm {

// Per-channel affine y = s (.) x + b with exact per-sample log-det
// H*W*sum_c ln|s_c|. Uninitialized layers run a data-dependent init on the
// first forward batch: s = 1/sigma_c, b = -mu_c/sigma_c, so that batch comes
// out zero-mean unit-std per channel (s=1, b=0 for channels with
// sigma < 1e-6).
class Actnorm {
public:
    Actnorm(int channels, const std::string& id_prefix);

    // s=1, b=0, already marked initialized.
    static Actnorm identity(int channels, const std::string& id_prefix);
    static Actnorm with_params(std::vector<float> s, std::vector<float> b,
                               const std::string& id_prefix);

    int channels() const { return s_.value.shape().c; }
    bool initialized() const { return initialized_; }
    void initialize_from(const Tensor& x);

    Tensor forward(const Tensor& x);  // triggers init when needed
    Tensor inverse(const Tensor& y) const;
    double logdet(const Tensor& x) const;
    double logdet_for(const Shape& sh) const;

    Var apply(Tape& t, Var x);
    Var apply_inverse(Tape& t, Var y);

    Param& scale() { return s_; }
    Param& bias() { return b_; }
    const Param& scale() const { return s_; }
    const Param& bias() const { return b_; }
    std::vector<Param*> params() { return {&s_, &b_}; }
    std::size_t param_count() const { return s_.value.numel() + b_.value.numel(); }

private:
    void check_ready(const char* op) const;

    Param s_;
    Param b_;
    bool initialized_ = false;

    friend class ModelSerializer;
};

// Invertible 1x1 convolution: y[b,:,i,j] = W x[b,:,i,j]. The weight is kept
// in PLU form - fixed row permutation, learnable unit-lower L, learnable
// upper U whose diagonal is sign_c * exp(logdiag_c) with frozen signs - so
// log|det W| = sum_c logdiag_c exactly.
class InvConv1x1 {
public:
    static InvConv1x1 identity(int channels, const std::string& id_prefix);
    static InvConv1x1 random_orthogonal(int channels, Rng& rng, const std::string& id_prefix);
    // PLU-factorize an explicit row-major C x C matrix (tests, known weights).
    static InvConv1x1 from_matrix(int channels, const std::vector<float>& w,
                                  const std::string& id_prefix);

    int channels() const { return channels_; }
    // Row-major C x C reconstruction of W.
    std::vector<float> weight_matrix() const;

    Tensor forward(const Tensor& x) const;
    Tensor inverse(const Tensor& y) const;
    double logdet(const Tensor& x) const;
    double logdet_for(const Shape& sh) const;

    Var apply(Tape& t, Var x);
    Var apply_inverse(Tape& t, Var y);

    std::vector<Param*> params() { return {&lower_, &upper_, &logdiag_}; }
    // Effective learnable entries: strict lower + strict upper + diagonal = C^2.
    std::size_t param_count() const {
        return static_cast<std::size_t>(channels_) * channels_;
    }
    Param& lower() { return lower_; }
    Param& upper() { return upper_; }
    Param& logdiag() { return logdiag_; }
    const Param& lower() const { return lower_; }
    const Param& upper() const { return upper_; }
    const Param& logdiag() const { return logdiag_; }
    const std::vector<int>& perm() const { return perm_; }
    const std::vector<float>& signs() const { return signs_; }

private:
    InvConv1x1(int channels, const std::string& id_prefix);

    struct Factors;  // reconstruction context shared with backward closures
    std::shared_ptr<const Factors> reconstruct() const;

    int channels_ = 0;
    std::vector<int> perm_;     // W row i = (L*U) row perm_[i]
    std::vector<float> signs_;  // frozen diagonal signs
    Param lower_;               // (C,C,1,1), strictly lower part used
    Param upper_;               // (C,C,1,1), strictly upper part used
    Param logdiag_;             // (1,C,1,1)

    friend class ModelSerializer;
};

// Subtractive coupling (NICE-style g): the first split_d channels pass
// through, the rest get f(passive) subtracted. f is conv3x3 -> tanh ->
// conv3x3 with the final stage zero-initialized, so a fresh layer is the
// identity map. The Jacobian is unit-triangular: log-det is exactly 0.
class Coupling {
public:
    Coupling(int channels, int hidden, Rng& rng, const std::string& id_prefix);
    static Coupling identity(int channels, int hidden, const std::string& id_prefix);

    int channels() const { return channels_; }
    int split_d() const { return split_d_; }
    int hidden() const { return hidden_; }

    Tensor f(const Tensor& passive) const;
    Tensor forward(const Tensor& x) const;
    Tensor inverse(const Tensor& y) const;
    double logdet(const Tensor&) const { return 0.0; }

    Var apply(Tape& t, Var x);
    Var apply_inverse(Tape& t, Var y);

    std::vector<Param*> params() { return {&w1_, &b1_, &w2_, &b2_}; }
    std::size_t param_count() const {
        return w1_.value.numel() + b1_.value.numel() + w2_.value.numel() + b2_.value.numel();
    }
    Param& conv1_weight() { return w1_; }
    Param& conv2_weight() { return w2_; }
    const Param& conv1_weight() const { return w1_; }
    const Param& conv1_bias() const { return b1_; }
    const Param& conv2_weight() const { return w2_; }
    const Param& conv2_bias() const { return b2_; }

private:
    Var f_taped(Tape& t, Var passive);

    int channels_ = 0;
    int split_d_ = 0;
    int hidden_ = 0;
    Param w1_, b1_, w2_, b2_;

    friend class ModelSerializer;
};

// One flow step: actnorm -> 1x1 conv -> coupling. Log-det is the sum of the
// three parts (coupling contributes 0), identical for every sample in the
// batch.
class FlowStep {
public:
    static FlowStep random_init(int channels, int hidden, Rng& rng, const std::string& id_prefix);
    static FlowStep identity_init(int channels, int hidden, const std::string& id_prefix);

    Tensor forward(const Tensor& x, double* logdet = nullptr);
    Tensor inverse(const Tensor& y) const;
    double logdet(const Tensor& x) const;

    Var apply(Tape& t, Var x, double* logdet = nullptr);
    Var apply_inverse(Tape& t, Var y);

    Actnorm& actnorm() { return actnorm_; }
    InvConv1x1& invconv() { return invconv_; }
    Coupling& coupling() { return coupling_; }
    const Actnorm& actnorm() const { return actnorm_; }
    const InvConv1x1& invconv() const { return invconv_; }
    const Coupling& coupling() const { return coupling_; }
    std::vector<Param*> params();
    std::size_t param_count() const;

private:
    FlowStep(Actnorm a, InvConv1x1 c, Coupling g)
        : actnorm_(std::move(a)), invconv_(std::move(c)), coupling_(std::move(g)) {}

    Actnorm actnorm_;
    InvConv1x1 invconv_;
    Coupling coupling_;

    friend class ModelSerializer;
};

// Tagged union over the three invertible primitives, for code that walks
// layers generically (log-det tables, gradient checks).
using FlowLayer = std::variant<Actnorm, InvConv1x1, Coupling>;

Tensor flow_layer_forward(FlowLayer& layer, const Tensor& x);
Tensor flow_layer_inverse(const FlowLayer& layer, const Tensor& y);
double flow_layer_logdet(const FlowLayer& layer, const Tensor& x);
const char* flow_layer_name(const FlowLayer& layer);

}  // namespace invnorm
