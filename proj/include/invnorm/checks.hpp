// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "invnorm/param.hpp"
#include "invnorm/tensor.hpp"

namespace invnorm {

// Result of comparing a layer's reported log-det against the dense oracle.
struct JacobianReport {
    double dense_logdet = 0.0;
    double layer_logdet = 0.0;
    double abs_err = 0.0;
    Shape input_shape;
};

// Central-difference gradient of a scalar function, one element at a time:
// (fn(x + eps*e_i) - fn(x - eps*e_i)) / (2*eps). fn must be deterministic.
// Throws NumericalError when fn produces a non-finite value and ConfigError
// when eps <= 0.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& x,
                        double eps);

// Ground-truth log|det J| of fn at x, built column-by-column with central
// differences and factored with a dense LU. Requires a single-sample input
// with at most 64 elements (SizeError otherwise) and an output of identical
// total size (ShapeError). |det| below 1e-30 raises SingularJacobianError.
double dense_jacobian_logdet(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                             double eps);

// Convenience wrapper producing the comparison record used by the log-det
// check command and the acceptance suite.
JacobianReport compare_logdet(const std::function<Tensor(const Tensor&)>& fn, double layer_logdet,
                              const Tensor& x, double eps);

// Worst relative disagreement between an analytic gradient and its
// finite-difference counterpart, restricted to elements with
// |reference| > threshold. Returns 0 when no element passes the threshold.
double max_rel_error(const Tensor& analytic, const Tensor& reference, double threshold);

}  // namespace invnorm
