// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "invnorm/tensor.hpp"

// Pure tensor kernels shared by the eager layer paths and the autodiff ops.
// Storage is single precision; reductions accumulate in double.
namespace invnorm::kernels {

// y[b,c,h,w] = s[c] * x[b,c,h,w] + b[c]
Tensor channel_affine(const Tensor& x, const std::vector<float>& s, const std::vector<float>& b);
// x = (y - b) / s
Tensor channel_affine_inv(const Tensor& y, const std::vector<float>& s, const std::vector<float>& b);

// y[b,:,h,w] = W * x[b,:,h,w] with W a row-major (C_out x C_in) matrix.
Tensor matmul_channels(const Tensor& x, const std::vector<float>& w, int c_out);

// 3x3 convolution, stride 1, zero padding 1. weight (OC, IC, 3, 3), bias (1, OC, 1, 1).
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor conv3x3_dx(const Tensor& gy, const Tensor& weight, const Shape& x_shape);
Tensor conv3x3_dw(const Tensor& x, const Tensor& gy, const Shape& w_shape);
std::vector<float> conv3x3_db(const Tensor& gy);

Tensor relu(const Tensor& x);
Tensor relu_back(const Tensor& x, const Tensor& gy);
Tensor tanh_act(const Tensor& x);
// Backward from the forward output y = tanh(x).
Tensor tanh_back(const Tensor& y, const Tensor& gy);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float k);

// 2x2 average pooling, stride 2; requires even H and W.
Tensor avgpool2(const Tensor& x);
Tensor avgpool2_back(const Tensor& gy, const Shape& x_shape);

// (B,C,H,W) -> (B,C,1,1) spatial mean.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_back(const Tensor& gy, const Shape& x_shape);

// x (B,C,1,1), weight (K,C,1,1), bias (1,K,1,1) -> (B,K,1,1)
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor linear_dx(const Tensor& gy, const Tensor& weight, const Shape& x_shape);
Tensor linear_dw(const Tensor& x, const Tensor& gy, const Shape& w_shape);
std::vector<float> linear_db(const Tensor& gy);

// Per-sample per-channel statistics over spatial positions (population std).
struct InstStats {
    int batch = 0;
    int channels = 0;
    std::vector<float> mu;       // B*C
    std::vector<float> sigma;    // B*C, floored at eps
    std::vector<std::uint8_t> floored;  // B*C, 1 where raw sigma < eps
};

// y = gamma[c] * (x - mu[b,c]) / max(sigma[b,c], eps) + beta[c]
std::pair<Tensor, InstStats> instance_norm(const Tensor& x, const std::vector<float>& gamma,
                                           const std::vector<float>& beta, float eps);
struct InstGrads {
    Tensor gx;
    std::vector<float> dgamma;
    std::vector<float> dbeta;
};
InstGrads instance_norm_back(const Tensor& x, const Tensor& gy, const InstStats& stats,
                             const std::vector<float>& gamma, float eps);

// Mean softmax cross-entropy over the batch. logits (B,K,1,1).
struct SoftmaxCe {
    double loss = 0.0;
    Tensor probs;
};
SoftmaxCe softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax_cross_entropy_back(const Tensor& probs, const std::vector<int>& labels, float gloss);

Tensor slice_channels(const Tensor& x, int c0, int c1);
Tensor concat_channels(const Tensor& a, const Tensor& b);

double sum_all(const Tensor& x);
double dot(const Tensor& a, const Tensor& b);

}  // namespace invnorm::kernels
