// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "invnorm/model.hpp"

// Double-precision reference forward path, written as plain loops with no
// shared code with the single-precision kernels or the tape. It backs the
// finite-difference side of gradient checks: evaluating the loss in double
// keeps the difference quotient far above round-off at eps = 1e-3, so a
// disagreement means a wrong gradient rather than noise.
namespace invnorm::ref {

struct DTensor {
    Shape shape;
    std::vector<double> v;
};

DTensor from(const Tensor& t);
double dot(const DTensor& a, const Tensor& w);

DTensor channel_affine(const DTensor& x, const Tensor& s, const Tensor& b);
DTensor channel_affine_inv(const DTensor& y, const Tensor& s, const Tensor& b);
DTensor matmul_channels(const DTensor& x, const std::vector<double>& w, int c_out);
DTensor conv3x3(const DTensor& x, const Tensor& weight, const Tensor& bias);
DTensor tanh_d(const DTensor& x);
DTensor instance_norm(const DTensor& x, const Tensor& gamma, const Tensor& beta, double eps);
DTensor slice_channels(const DTensor& x, int c0, int c1);
DTensor concat_channels(const DTensor& a, const DTensor& b);
DTensor add(const DTensor& a, const DTensor& b);
DTensor sub(const DTensor& a, const DTensor& b);
std::pair<DTensor, SqueezeRecord> squeeze_fwd(const DTensor& x);
DTensor squeeze_inv(const DTensor& y, const SqueezeRecord& rec);

// Layer-level forwards reading the layers' current parameter values.
DTensor actnorm_fwd(const Actnorm& a, const DTensor& x);
DTensor actnorm_inv(const Actnorm& a, const DTensor& y);
std::vector<double> invconv_weight(const InvConv1x1& c);
DTensor invconv_fwd(const InvConv1x1& c, const DTensor& x);
DTensor invconv_inv(const InvConv1x1& c, const DTensor& y);
DTensor coupling_f(const Coupling& c, const DTensor& passive);
DTensor coupling_fwd(const Coupling& c, const DTensor& x);
DTensor coupling_inv(const Coupling& c, const DTensor& y);
DTensor flowstep_fwd(const FlowStep& s, const DTensor& x);
DTensor flowstep_inv(const FlowStep& s, const DTensor& y);
DTensor instance_norm_layer(const InstanceNorm& in_layer, const DTensor& z);
// Full pipeline encode -> IN -> decode; actnorm layers must be initialized.
DTensor model_forward(const InvNormModel& m, const DTensor& x);

}  // namespace invnorm::ref
