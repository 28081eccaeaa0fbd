// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/refmath.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace invnorm::ref {

DTensor from(const Tensor& t) {
    DTensor d;
    d.shape = t.shape();
    d.v.assign(t.data(), t.data() + t.numel());
    return d;
}

double dot(const DTensor& a, const Tensor& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) acc += a.v[i] * w.data()[i];
    return acc;
}

DTensor channel_affine(const DTensor& x, const Tensor& s, const Tensor& b) {
    DTensor out{x.shape, std::vector<double>(x.v.size())};
    const std::size_t hw = x.shape.spatial();
    std::size_t i = 0;
    for (int bi = 0; bi < x.shape.b; ++bi) {
        for (int ci = 0; ci < x.shape.c; ++ci) {
            const double sc = s.data()[ci], bc = b.data()[ci];
            for (std::size_t k = 0; k < hw; ++k, ++i) out.v[i] = sc * x.v[i] + bc;
        }
    }
    return out;
}

DTensor channel_affine_inv(const DTensor& y, const Tensor& s, const Tensor& b) {
    DTensor out{y.shape, std::vector<double>(y.v.size())};
    const std::size_t hw = y.shape.spatial();
    std::size_t i = 0;
    for (int bi = 0; bi < y.shape.b; ++bi) {
        for (int ci = 0; ci < y.shape.c; ++ci) {
            const double sc = s.data()[ci], bc = b.data()[ci];
            for (std::size_t k = 0; k < hw; ++k, ++i) out.v[i] = (y.v[i] - bc) / sc;
        }
    }
    return out;
}

DTensor matmul_channels(const DTensor& x, const std::vector<double>& w, int c_out) {
    const Shape& sh = x.shape;
    DTensor out{{sh.b, c_out, sh.h, sh.w}, {}};
    out.v.assign(out.shape.numel(), 0.0);
    const std::size_t hw = sh.spatial();
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int co = 0; co < c_out; ++co) {
            for (int ci = 0; ci < sh.c; ++ci) {
                const double wv = w[static_cast<std::size_t>(co) * sh.c + ci];
                const double* src = x.v.data() + (static_cast<std::size_t>(bi) * sh.c + ci) * hw;
                double* dst = out.v.data() + (static_cast<std::size_t>(bi) * c_out + co) * hw;
                for (std::size_t k = 0; k < hw; ++k) dst[k] += wv * src[k];
            }
        }
    }
    return out;
}

DTensor conv3x3(const DTensor& x, const Tensor& weight, const Tensor& bias) {
    const Shape& sh = x.shape;
    const Shape& ws = weight.shape();
    const int oc = ws.b, ic = ws.c;
    DTensor out{{sh.b, oc, sh.h, sh.w}, std::vector<double>(static_cast<std::size_t>(sh.b) * oc *
                                                            sh.h * sh.w)};
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int co = 0; co < oc; ++co) {
            for (int i = 0; i < sh.h; ++i) {
                for (int j = 0; j < sh.w; ++j) {
                    double acc = bias.data()[co];
                    for (int ci = 0; ci < ic; ++ci) {
                        for (int dh = -1; dh <= 1; ++dh) {
                            for (int dw = -1; dw <= 1; ++dw) {
                                const int si = i + dh, sj = j + dw;
                                if (si < 0 || si >= sh.h || sj < 0 || sj >= sh.w) continue;
                                const double xv =
                                    x.v[((static_cast<std::size_t>(bi) * ic + ci) * sh.h + si) *
                                            sh.w + sj];
                                const double wv = weight.at(co, ci, dh + 1, dw + 1);
                                acc += xv * wv;
                            }
                        }
                    }
                    out.v[((static_cast<std::size_t>(bi) * oc + co) * sh.h + i) * sh.w + j] = acc;
                }
            }
        }
    }
    return out;
}

DTensor tanh_d(const DTensor& x) {
    DTensor out{x.shape, std::vector<double>(x.v.size())};
    for (std::size_t i = 0; i < x.v.size(); ++i) out.v[i] = std::tanh(x.v[i]);
    return out;
}

DTensor instance_norm(const DTensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const Shape& sh = x.shape;
    DTensor out{sh, std::vector<double>(x.v.size())};
    const std::size_t hw = sh.spatial();
    const double m = static_cast<double>(hw);
    std::size_t base = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t k = 0; k < hw; ++k) {
                s1 += x.v[base + k];
                s2 += x.v[base + k] * x.v[base + k];
            }
            const double mu = s1 / m;
            const double var = std::max(0.0, s2 / m - mu * mu);
            const double denom = std::max(std::sqrt(var), eps);
            const double g = gamma.data()[ci], be = beta.data()[ci];
            for (std::size_t k = 0; k < hw; ++k) {
                out.v[base + k] = g * (x.v[base + k] - mu) / denom + be;
            }
            base += hw;
        }
    }
    return out;
}

DTensor slice_channels(const DTensor& x, int c0, int c1) {
    const Shape& sh = x.shape;
    DTensor out{{sh.b, c1 - c0, sh.h, sh.w}, {}};
    out.v.reserve(out.shape.numel());
    const std::size_t hw = sh.spatial();
    for (int bi = 0; bi < sh.b; ++bi) {
        const double* src = x.v.data() + (static_cast<std::size_t>(bi) * sh.c + c0) * hw;
        out.v.insert(out.v.end(), src, src + static_cast<std::size_t>(c1 - c0) * hw);
    }
    return out;
}

DTensor concat_channels(const DTensor& a, const DTensor& b) {
    const Shape& sa = a.shape;
    const Shape& sb = b.shape;
    DTensor out{{sa.b, sa.c + sb.c, sa.h, sa.w}, {}};
    out.v.reserve(out.shape.numel());
    const std::size_t hw = sa.spatial();
    for (int bi = 0; bi < sa.b; ++bi) {
        const double* pa = a.v.data() + static_cast<std::size_t>(bi) * sa.c * hw;
        out.v.insert(out.v.end(), pa, pa + static_cast<std::size_t>(sa.c) * hw);
        const double* pb = b.v.data() + static_cast<std::size_t>(bi) * sb.c * hw;
        out.v.insert(out.v.end(), pb, pb + static_cast<std::size_t>(sb.c) * hw);
    }
    return out;
}

DTensor add(const DTensor& a, const DTensor& b) {
    DTensor out{a.shape, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] + b.v[i];
    return out;
}

DTensor sub(const DTensor& a, const DTensor& b) {
    DTensor out{a.shape, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] - b.v[i];
    return out;
}

std::pair<DTensor, SqueezeRecord> squeeze_fwd(const DTensor& x) {
    const Shape& sh = x.shape;
    SqueezeRecord rec{sh.h, sh.w, sh.h % 2, sh.w % 2};
    const int oh = (sh.h + 1) / 2, ow = (sh.w + 1) / 2;
    DTensor out{{sh.b, 4 * sh.c, oh, ow}, {}};
    out.v.assign(out.shape.numel(), 0.0);
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            for (int k = 0; k < 4; ++k) {
                for (int i = 0; i < oh; ++i) {
                    const int si = 2 * i + k / 2;
                    if (si >= sh.h) continue;
                    for (int j = 0; j < ow; ++j) {
                        const int sj = 2 * j + k % 2;
                        if (sj >= sh.w) continue;
                        out.v[((static_cast<std::size_t>(bi) * out.shape.c + 4 * ci + k) * oh +
                               i) * ow + j] =
                            x.v[((static_cast<std::size_t>(bi) * sh.c + ci) * sh.h + si) * sh.w +
                                sj];
                    }
                }
            }
        }
    }
    return {std::move(out), rec};
}

DTensor squeeze_inv(const DTensor& y, const SqueezeRecord& rec) {
    const Shape& sh = y.shape;
    DTensor out{{sh.b, sh.c / 4, rec.orig_h, rec.orig_w}, {}};
    out.v.assign(out.shape.numel(), 0.0);
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < out.shape.c; ++ci) {
            for (int k = 0; k < 4; ++k) {
                for (int i = 0; i < sh.h; ++i) {
                    const int di = 2 * i + k / 2;
                    if (di >= rec.orig_h) continue;
                    for (int j = 0; j < sh.w; ++j) {
                        const int dj = 2 * j + k % 2;
                        if (dj >= rec.orig_w) continue;
                        out.v[((static_cast<std::size_t>(bi) * out.shape.c + ci) * rec.orig_h +
                               di) * rec.orig_w + dj] =
                            y.v[((static_cast<std::size_t>(bi) * sh.c + 4 * ci + k) * sh.h + i) *
                                    sh.w + j];
                    }
                }
            }
        }
    }
    return out;
}

DTensor actnorm_fwd(const Actnorm& a, const DTensor& x) {
    return channel_affine(x, a.scale().value, a.bias().value);
}

DTensor actnorm_inv(const Actnorm& a, const DTensor& y) {
    return channel_affine_inv(y, a.scale().value, a.bias().value);
}

std::vector<double> invconv_weight(const InvConv1x1& c) {
    const int n = c.channels();
    Eigen::MatrixXd lower = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd upper = Eigen::MatrixXd::Zero(n, n);
    const float* lp = c.lower().value.data();
    const float* up = c.upper().value.data();
    const float* dp = c.logdiag().value.data();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) lower(i, j) = lp[static_cast<std::size_t>(i) * n + j];
        for (int j = i + 1; j < n; ++j) upper(i, j) = up[static_cast<std::size_t>(i) * n + j];
        upper(i, i) = static_cast<double>(c.signs()[i]) * std::exp(static_cast<double>(dp[i]));
    }
    Eigen::MatrixXd lu = lower * upper;
    std::vector<double> w(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) w[static_cast<std::size_t>(i) * n + j] = lu(c.perm()[i], j);
    }
    return w;
}

DTensor invconv_fwd(const InvConv1x1& c, const DTensor& x) {
    return matmul_channels(x, invconv_weight(c), c.channels());
}

DTensor invconv_inv(const InvConv1x1& c, const DTensor& y) {
    const int n = c.channels();
    std::vector<double> w = invconv_weight(c);
    Eigen::MatrixXd wm(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) wm(i, j) = w[static_cast<std::size_t>(i) * n + j];
    }
    Eigen::MatrixXd winv = wm.inverse();
    std::vector<double> wi(w.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) wi[static_cast<std::size_t>(i) * n + j] = winv(i, j);
    }
    return matmul_channels(y, wi, n);
}

DTensor coupling_f(const Coupling& c, const DTensor& passive) {
    DTensor h = conv3x3(passive, c.conv1_weight().value, c.conv1_bias().value);
    h = tanh_d(h);
    return conv3x3(h, c.conv2_weight().value, c.conv2_bias().value);
}

DTensor coupling_fwd(const Coupling& c, const DTensor& x) {
    DTensor passive = slice_channels(x, 0, c.split_d());
    DTensor active = slice_channels(x, c.split_d(), c.channels());
    return concat_channels(passive, sub(active, coupling_f(c, passive)));
}

DTensor coupling_inv(const Coupling& c, const DTensor& y) {
    DTensor passive = slice_channels(y, 0, c.split_d());
    DTensor active = slice_channels(y, c.split_d(), c.channels());
    return concat_channels(passive, add(active, coupling_f(c, passive)));
}

DTensor flowstep_fwd(const FlowStep& s, const DTensor& x) {
    return coupling_fwd(s.coupling(), invconv_fwd(s.invconv(), actnorm_fwd(s.actnorm(), x)));
}

DTensor flowstep_inv(const FlowStep& s, const DTensor& y) {
    return actnorm_inv(s.actnorm(), invconv_inv(s.invconv(), coupling_inv(s.coupling(), y)));
}

DTensor instance_norm_layer(const InstanceNorm& in_layer, const DTensor& z) {
    return instance_norm(z, in_layer.gamma().value, in_layer.beta().value,
                         static_cast<double>(in_layer.eps()));
}

DTensor model_forward(const InvNormModel& m, const DTensor& x) {
    auto [h, rec1] = squeeze_fwd(x);
    for (const FlowStep& s : m.block1()) h = flowstep_fwd(s, h);
    auto [h2, rec2] = squeeze_fwd(h);
    for (const FlowStep& s : m.block2()) h2 = flowstep_fwd(s, h2);
    DTensor z = instance_norm_layer(m.instance_norm(), h2);
    for (auto it = m.block2().rbegin(); it != m.block2().rend(); ++it) z = flowstep_inv(*it, z);
    z = squeeze_inv(z, rec2);
    for (auto it = m.block1().rbegin(); it != m.block1().rend(); ++it) z = flowstep_inv(*it, z);
    return squeeze_inv(z, rec1);
}

}  // namespace invnorm::ref
