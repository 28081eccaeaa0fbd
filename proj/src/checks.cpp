// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/checks.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace invnorm {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& x,
                        double eps) {
    if (eps <= 0.0) throw ConfigError("finite_diff_grad: eps must be > 0");
    std::vector<float> grad(x.numel());
    std::vector<float> work(x.vec());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const float orig = work[i];
        work[i] = static_cast<float>(orig + eps);
        const double xp = work[i];  // realized step after float rounding
        double fp = fn(Tensor::from_data_unchecked(x.shape(), work));
        work[i] = static_cast<float>(orig - eps);
        const double xm = work[i];
        double fm = fn(Tensor::from_data_unchecked(x.shape(), work));
        work[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericalError("finite_diff_grad: non-finite function value at element " +
                                 std::to_string(i));
        }
        if (xp == xm) {
            throw NumericalError("finite_diff_grad: step vanished at element " +
                                 std::to_string(i));
        }
        grad[i] = static_cast<float>((fp - fm) / (xp - xm));
    }
    return Tensor::from_data_unchecked(x.shape(), std::move(grad));
}

double dense_jacobian_logdet(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                             double eps) {
    if (eps <= 0.0) throw ConfigError("dense_jacobian_logdet: eps must be > 0");
    if (x.shape().b != 1) {
        throw SizeError("dense_jacobian_logdet: input must be a single sample");
    }
    const std::size_t n = x.numel();
    if (n > 64) {
        throw SizeError("dense_jacobian_logdet: input has " + std::to_string(n) +
                        " elements, cap is 64");
    }
    Eigen::MatrixXd jac(n, n);
    std::vector<float> work(x.vec());
    for (std::size_t j = 0; j < n; ++j) {
        const float orig = work[j];
        work[j] = static_cast<float>(orig + eps);
        const double xp = work[j];  // realized step after float rounding
        Tensor yp = fn(Tensor::from_data_unchecked(x.shape(), work));
        work[j] = static_cast<float>(orig - eps);
        const double xm = work[j];
        Tensor ym = fn(Tensor::from_data_unchecked(x.shape(), work));
        work[j] = orig;
        if (yp.numel() != n || ym.numel() != n) {
            throw ShapeError("dense_jacobian_logdet: fn changed the element count");
        }
        if (xp == xm) {
            throw NumericalError("dense_jacobian_logdet: step vanished at element " +
                                 std::to_string(j));
        }
        const float* pp = yp.data();
        const float* pm = ym.data();
        for (std::size_t i = 0; i < n; ++i) {
            double d = (static_cast<double>(pp[i]) - pm[i]) / (xp - xm);
            if (!std::isfinite(d)) {
                throw NumericalError("dense_jacobian_logdet: non-finite Jacobian entry");
            }
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
        }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    double log_abs_det = 0.0;
    double sign_scale = 1.0;
    for (Eigen::Index i = 0; i < lu.matrixLU().rows(); ++i) {
        double d = std::fabs(lu.matrixLU()(i, i));
        if (d == 0.0) {
            sign_scale = 0.0;
            break;
        }
        log_abs_det += std::log(d);
    }
    // |det| < 1e-30 means the map is numerically non-invertible here.
    if (sign_scale == 0.0 || log_abs_det < std::log(1e-30)) {
        throw SingularJacobianError("dense_jacobian_logdet: |det| below 1e-30");
    }
    return log_abs_det;
}

JacobianReport compare_logdet(const std::function<Tensor(const Tensor&)>& fn, double layer_logdet,
                              const Tensor& x, double eps) {
    JacobianReport r;
    r.dense_logdet = dense_jacobian_logdet(fn, x, eps);
    r.layer_logdet = layer_logdet;
    r.abs_err = std::fabs(r.dense_logdet - r.layer_logdet);
    r.input_shape = x.shape();
    return r;
}

double max_rel_error(const Tensor& analytic, const Tensor& reference, double threshold) {
    if (!(analytic.shape() == reference.shape())) {
        throw ShapeError("max_rel_error: shape mismatch");
    }
    double worst = 0.0;
    const float* pa = analytic.data();
    const float* pr = reference.data();
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
        double ref = pr[i];
        if (std::fabs(ref) <= threshold) continue;
        double rel = std::fabs(pa[i] - ref) / std::fabs(ref);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace invnorm
