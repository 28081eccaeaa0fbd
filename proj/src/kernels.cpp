// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/kernels.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace invnorm::kernels {

namespace {

using MatMap = Eigen::Map<Eigen::MatrixXf>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXf>;

void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

// Scatter x (one image, C x H x W) into the patch matrix used by the GEMM
// convolution. Row-major layout (C*9, HW): row c*9 + (dh*3+dw) holds the
// input plane shifted by (dh-1, dw-1), zero outside.
void im2col3x3(const float* x, int c, int h, int w, float* col) {
    const int hw = h * w;
    for (int ci = 0; ci < c; ++ci) {
        const float* plane = x + static_cast<std::size_t>(ci) * hw;
        for (int dh = 0; dh < 3; ++dh) {
            for (int dw = 0; dw < 3; ++dw) {
                float* row = col + (static_cast<std::size_t>(ci) * 9 + dh * 3 + dw) * hw;
                for (int i = 0; i < h; ++i) {
                    int si = i + dh - 1;
                    float* dst = row + static_cast<std::size_t>(i) * w;
                    if (si < 0 || si >= h) {
                        std::fill(dst, dst + w, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(si) * w;
                    int shift = dw - 1;  // source col = dest col + shift
                    int j0 = std::max(0, -shift);
                    int j1 = std::min(w, w - shift);
                    if (j0 > 0) std::fill(dst, dst + j0, 0.0f);
                    if (j1 > j0) std::copy(src + j0 + shift, src + j1 + shift, dst + j0);
                    if (j1 < w) std::fill(dst + std::max(j1, j0), dst + w, 0.0f);
                }
            }
        }
    }
}

// Adds the patch-matrix gradient back onto the input-image gradient.
void col2im3x3(const float* col, int c, int h, int w, float* gx) {
    const int hw = h * w;
    for (int ci = 0; ci < c; ++ci) {
        float* plane = gx + static_cast<std::size_t>(ci) * hw;
        for (int dh = 0; dh < 3; ++dh) {
            for (int dw = 0; dw < 3; ++dw) {
                const float* row = col + (static_cast<std::size_t>(ci) * 9 + dh * 3 + dw) * hw;
                for (int i = 0; i < h; ++i) {
                    int si = i + dh - 1;
                    if (si < 0 || si >= h) continue;
                    const float* src = row + static_cast<std::size_t>(i) * w;
                    float* dst = plane + static_cast<std::size_t>(si) * w;
                    int shift = dw - 1;
                    int j0 = std::max(0, -shift);
                    int j1 = std::min(w, w - shift);
                    for (int j = j0; j < j1; ++j) dst[j + shift] += src[j];
                }
            }
        }
    }
}

}  // namespace

Tensor channel_affine(const Tensor& x, const std::vector<float>& s, const std::vector<float>& b) {
    const Shape& sh = x.shape();
    require(static_cast<int>(s.size()) == sh.c && static_cast<int>(b.size()) == sh.c,
            "channel_affine: parameter length != channel count");
    std::vector<float> out(x.numel());
    const float* px = x.data();
    const std::size_t hw = sh.spatial();
    std::size_t i = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            const float sc = s[ci], bc = b[ci];
            for (std::size_t k = 0; k < hw; ++k, ++i) out[i] = sc * px[i] + bc;
        }
    }
    return Tensor::from_data_unchecked(sh, std::move(out));
}

Tensor channel_affine_inv(const Tensor& y, const std::vector<float>& s, const std::vector<float>& b) {
    const Shape& sh = y.shape();
    require(static_cast<int>(s.size()) == sh.c && static_cast<int>(b.size()) == sh.c,
            "channel_affine_inv: parameter length != channel count");
    std::vector<float> out(y.numel());
    const float* py = y.data();
    const std::size_t hw = sh.spatial();
    std::size_t i = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            const float inv = 1.0f / s[ci], bc = b[ci];
            for (std::size_t k = 0; k < hw; ++k, ++i) out[i] = (py[i] - bc) * inv;
        }
    }
    return Tensor::from_data_unchecked(sh, std::move(out));
}

Tensor matmul_channels(const Tensor& x, const std::vector<float>& w, int c_out) {
    const Shape& sh = x.shape();
    require(static_cast<int>(w.size()) == c_out * sh.c, "matmul_channels: weight size mismatch");
    const int hw = static_cast<int>(sh.spatial());
    Shape osh{sh.b, c_out, sh.h, sh.w};
    std::vector<float> out(osh.numel());
    // Row-major (c_out, c_in) weight viewed as column-major (c_in, c_out) = W^T.
    ConstMatMap wm(w.data(), sh.c, c_out);
    for (int bi = 0; bi < sh.b; ++bi) {
        ConstMatMap xm(x.data() + static_cast<std::size_t>(bi) * sh.c * hw, hw, sh.c);
        MatMap ym(out.data() + static_cast<std::size_t>(bi) * c_out * hw, hw, c_out);
        ym.noalias() = xm * wm;
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const Shape& sh = x.shape();
    const Shape& wsh = weight.shape();
    require(wsh.c == sh.c && wsh.h == 3 && wsh.w == 3, "conv3x3: weight shape mismatch");
    require(bias.shape().c == wsh.b && bias.numel() == static_cast<std::size_t>(wsh.b),
            "conv3x3: bias shape mismatch");
    const int oc = wsh.b, ic = sh.c, hw = static_cast<int>(sh.spatial());
    Shape osh{sh.b, oc, sh.h, sh.w};
    std::vector<float> out(osh.numel());
    std::vector<float> col(static_cast<std::size_t>(ic) * 9 * hw);
    ConstMatMap wm(weight.data(), ic * 9, oc);  // (IC*9, OC) view of row-major (OC, IC*9)
    for (int bi = 0; bi < sh.b; ++bi) {
        im2col3x3(x.data() + static_cast<std::size_t>(bi) * ic * hw, ic, sh.h, sh.w, col.data());
        ConstMatMap km(col.data(), hw, ic * 9);
        MatMap ym(out.data() + static_cast<std::size_t>(bi) * oc * hw, hw, oc);
        ym.noalias() = km * wm;
    }
    const float* pb = bias.data();
    std::size_t i = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int co = 0; co < oc; ++co) {
            const float bv = pb[co];
            for (int k = 0; k < hw; ++k, ++i) out[i] += bv;
        }
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

Tensor conv3x3_dx(const Tensor& gy, const Tensor& weight, const Shape& x_shape) {
    const Shape& wsh = weight.shape();
    const int oc = wsh.b, ic = wsh.c, hw = static_cast<int>(x_shape.spatial());
    require(gy.shape().c == oc && gy.shape().h == x_shape.h && gy.shape().w == x_shape.w &&
                gy.shape().b == x_shape.b,
            "conv3x3_dx: gradient shape mismatch");
    std::vector<float> gx(x_shape.numel(), 0.0f);
    std::vector<float> dcol(static_cast<std::size_t>(ic) * 9 * hw);
    ConstMatMap wm(weight.data(), ic * 9, oc);
    for (int bi = 0; bi < x_shape.b; ++bi) {
        ConstMatMap gym(gy.data() + static_cast<std::size_t>(bi) * oc * hw, hw, oc);
        MatMap dcm(dcol.data(), hw, ic * 9);
        dcm.noalias() = gym * wm.transpose();
        col2im3x3(dcol.data(), ic, x_shape.h, x_shape.w,
                  gx.data() + static_cast<std::size_t>(bi) * ic * hw);
    }
    return Tensor::from_data_unchecked(x_shape, std::move(gx));
}

Tensor conv3x3_dw(const Tensor& x, const Tensor& gy, const Shape& w_shape) {
    const Shape& sh = x.shape();
    const int oc = w_shape.b, ic = w_shape.c, hw = static_cast<int>(sh.spatial());
    require(sh.c == ic && gy.shape().c == oc, "conv3x3_dw: shape mismatch");
    std::vector<float> gw(w_shape.numel(), 0.0f);
    std::vector<float> col(static_cast<std::size_t>(ic) * 9 * hw);
    MatMap gwm(gw.data(), ic * 9, oc);
    for (int bi = 0; bi < sh.b; ++bi) {
        im2col3x3(x.data() + static_cast<std::size_t>(bi) * ic * hw, ic, sh.h, sh.w, col.data());
        ConstMatMap km(col.data(), hw, ic * 9);
        ConstMatMap gym(gy.data() + static_cast<std::size_t>(bi) * oc * hw, hw, oc);
        gwm.noalias() += km.transpose() * gym;
    }
    return Tensor::from_data_unchecked(w_shape, std::move(gw));
}

std::vector<float> conv3x3_db(const Tensor& gy) {
    const Shape& sh = gy.shape();
    std::vector<float> db(sh.c, 0.0f);
    const float* g = gy.data();
    const std::size_t hw = sh.spatial();
    std::size_t i = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            double acc = 0.0;
            for (std::size_t k = 0; k < hw; ++k, ++i) acc += g[i];
            db[ci] += static_cast<float>(acc);
        }
    }
    return db;
}

Tensor relu(const Tensor& x) {
    std::vector<float> out(x.numel());
    const float* p = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] > 0.0f ? p[i] : 0.0f;
    return Tensor::from_data_unchecked(x.shape(), std::move(out));
}

Tensor relu_back(const Tensor& x, const Tensor& gy) {
    std::vector<float> out(x.numel());
    const float* p = x.data();
    const float* g = gy.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] > 0.0f ? g[i] : 0.0f;
    return Tensor::from_data_unchecked(x.shape(), std::move(out));
}

Tensor tanh_act(const Tensor& x) {
    std::vector<float> out(x.numel());
    const float* p = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(p[i]);
    return Tensor::from_data_unchecked(x.shape(), std::move(out));
}

Tensor tanh_back(const Tensor& y, const Tensor& gy) {
    std::vector<float> out(y.numel());
    const float* p = y.data();
    const float* g = gy.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[i] * (1.0f - p[i] * p[i]);
    return Tensor::from_data_unchecked(y.shape(), std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch");
    std::vector<float> out(a.numel());
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    return Tensor::from_data_unchecked(a.shape(), std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    std::vector<float> out(a.numel());
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
    return Tensor::from_data_unchecked(a.shape(), std::move(out));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<float> out(a.numel());
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
    return Tensor::from_data_unchecked(a.shape(), std::move(out));
}

Tensor scale(const Tensor& a, float k) {
    std::vector<float> out(a.numel());
    const float* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * pa[i];
    return Tensor::from_data_unchecked(a.shape(), std::move(out));
}

Tensor avgpool2(const Tensor& x) {
    const Shape& sh = x.shape();
    require(sh.h % 2 == 0 && sh.w % 2 == 0, "avgpool2: H and W must be even");
    Shape osh{sh.b, sh.c, sh.h / 2, sh.w / 2};
    std::vector<float> out(osh.numel());
    std::size_t o = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            for (int i = 0; i < osh.h; ++i) {
                for (int j = 0; j < osh.w; ++j, ++o) {
                    out[o] = 0.25f * (x.at(bi, ci, 2 * i, 2 * j) + x.at(bi, ci, 2 * i, 2 * j + 1) +
                                      x.at(bi, ci, 2 * i + 1, 2 * j) +
                                      x.at(bi, ci, 2 * i + 1, 2 * j + 1));
                }
            }
        }
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

Tensor avgpool2_back(const Tensor& gy, const Shape& x_shape) {
    std::vector<float> gx(x_shape.numel());
    const Shape& osh = gy.shape();
    for (int bi = 0; bi < x_shape.b; ++bi) {
        for (int ci = 0; ci < x_shape.c; ++ci) {
            for (int i = 0; i < x_shape.h; ++i) {
                for (int j = 0; j < x_shape.w; ++j) {
                    std::size_t idx =
                        ((static_cast<std::size_t>(bi) * x_shape.c + ci) * x_shape.h + i) *
                            x_shape.w + j;
                    gx[idx] = 0.25f * gy.at(bi, ci, i / 2, j / 2);
                }
            }
        }
    }
    (void)osh;
    return Tensor::from_data_unchecked(x_shape, std::move(gx));
}

Tensor global_avg_pool(const Tensor& x) {
    const Shape& sh = x.shape();
    Shape osh{sh.b, sh.c, 1, 1};
    std::vector<float> out(osh.numel());
    const float* p = x.data();
    const std::size_t hw = sh.spatial();
    std::size_t i = 0;
    for (std::size_t bc = 0; bc < static_cast<std::size_t>(sh.b) * sh.c; ++bc) {
        double acc = 0.0;
        for (std::size_t k = 0; k < hw; ++k, ++i) acc += p[i];
        out[bc] = static_cast<float>(acc / static_cast<double>(hw));
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

Tensor global_avg_pool_back(const Tensor& gy, const Shape& x_shape) {
    std::vector<float> gx(x_shape.numel());
    const float* g = gy.data();
    const std::size_t hw = x_shape.spatial();
    const float inv = 1.0f / static_cast<float>(hw);
    std::size_t i = 0;
    for (std::size_t bc = 0; bc < static_cast<std::size_t>(x_shape.b) * x_shape.c; ++bc) {
        const float v = g[bc] * inv;
        for (std::size_t k = 0; k < hw; ++k, ++i) gx[i] = v;
    }
    return Tensor::from_data_unchecked(x_shape, std::move(gx));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const Shape& sh = x.shape();
    const Shape& wsh = weight.shape();
    require(sh.h == 1 && sh.w == 1 && wsh.c == sh.c, "linear: shape mismatch");
    const int k = wsh.b, c = sh.c;
    Shape osh{sh.b, k, 1, 1};
    std::vector<float> out(osh.numel());
    ConstMatMap xm(x.data(), c, sh.b);
    ConstMatMap wm(weight.data(), c, k);
    MatMap ym(out.data(), k, sh.b);
    ym.noalias() = wm.transpose() * xm;
    const float* pb = bias.data();
    std::size_t i = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ki = 0; ki < k; ++ki, ++i) out[i] += pb[ki];
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

Tensor linear_dx(const Tensor& gy, const Tensor& weight, const Shape& x_shape) {
    const int k = weight.shape().b, c = x_shape.c;
    std::vector<float> gx(x_shape.numel());
    ConstMatMap gym(gy.data(), k, x_shape.b);
    ConstMatMap wm(weight.data(), c, k);
    MatMap gxm(gx.data(), c, x_shape.b);
    gxm.noalias() = wm * gym;
    return Tensor::from_data_unchecked(x_shape, std::move(gx));
}

Tensor linear_dw(const Tensor& x, const Tensor& gy, const Shape& w_shape) {
    const int k = w_shape.b, c = w_shape.c, b = x.shape().b;
    std::vector<float> gw(w_shape.numel());
    ConstMatMap xm(x.data(), c, b);
    ConstMatMap gym(gy.data(), k, b);
    MatMap gwm(gw.data(), c, k);
    gwm.noalias() = xm * gym.transpose();
    return Tensor::from_data_unchecked(w_shape, std::move(gw));
}

std::vector<float> linear_db(const Tensor& gy) {
    const Shape& sh = gy.shape();
    std::vector<float> db(sh.c, 0.0f);
    const float* g = gy.data();
    std::size_t i = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci, ++i) db[ci] += g[i];
    }
    return db;
}

std::pair<Tensor, InstStats> instance_norm(const Tensor& x, const std::vector<float>& gamma,
                                           const std::vector<float>& beta, float eps) {
    const Shape& sh = x.shape();
    require(static_cast<int>(gamma.size()) == sh.c && static_cast<int>(beta.size()) == sh.c,
            "instance_norm: parameter length != channel count");
    if (eps <= 0.0f) throw ConfigError("instance_norm: eps must be > 0");
    InstStats st;
    st.batch = sh.b;
    st.channels = sh.c;
    st.mu.resize(static_cast<std::size_t>(sh.b) * sh.c);
    st.sigma.resize(st.mu.size());
    st.floored.resize(st.mu.size());
    std::vector<float> out(x.numel());
    const float* p = x.data();
    const std::size_t hw = sh.spatial();
    const double m = static_cast<double>(hw);
    std::size_t base = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t k = 0; k < hw; ++k) {
                double v = p[base + k];
                s1 += v;
                s2 += v * v;
            }
            double mu = s1 / m;
            double var = std::max(0.0, s2 / m - mu * mu);
            double sig = std::sqrt(var);
            std::size_t bc = static_cast<std::size_t>(bi) * sh.c + ci;
            st.floored[bc] = sig < eps ? 1 : 0;
            double denom = std::max(sig, static_cast<double>(eps));
            st.mu[bc] = static_cast<float>(mu);
            st.sigma[bc] = static_cast<float>(denom);
            const float g = gamma[ci], be = beta[ci];
            const float muf = static_cast<float>(mu), inv = static_cast<float>(1.0 / denom);
            for (std::size_t k = 0; k < hw; ++k) {
                out[base + k] = g * (p[base + k] - muf) * inv + be;
            }
            base += hw;
        }
    }
    return {Tensor::from_data_unchecked(sh, std::move(out)), std::move(st)};
}

InstGrads instance_norm_back(const Tensor& x, const Tensor& gy, const InstStats& stats,
                             const std::vector<float>& gamma, float eps) {
    const Shape& sh = x.shape();
    InstGrads out;
    out.dgamma.assign(sh.c, 0.0f);
    out.dbeta.assign(sh.c, 0.0f);
    std::vector<float> gx(x.numel());
    const float* p = x.data();
    const float* g = gy.data();
    const std::size_t hw = sh.spatial();
    const double m = static_cast<double>(hw);
    std::size_t base = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci) {
            std::size_t bc = static_cast<std::size_t>(bi) * sh.c + ci;
            const double mu = stats.mu[bc];
            const double denom = stats.sigma[bc];
            const bool floored = stats.floored[bc] != 0;
            double gsum = 0.0, gxhat = 0.0;
            for (std::size_t k = 0; k < hw; ++k) {
                double xh = (p[base + k] - mu) / denom;
                gsum += g[base + k];
                gxhat += g[base + k] * xh;
            }
            out.dbeta[ci] += static_cast<float>(gsum);
            out.dgamma[ci] += static_cast<float>(gxhat);
            const double gmean = gsum / m;
            const double gxhat_mean = gxhat / m;
            const double coef = gamma[ci] / denom;
            for (std::size_t k = 0; k < hw; ++k) {
                double xh = (p[base + k] - mu) / denom;
                double v = floored ? coef * (g[base + k] - gmean)
                                   : coef * (g[base + k] - gmean - xh * gxhat_mean);
                gx[base + k] = static_cast<float>(v);
            }
            base += hw;
        }
    }
    (void)eps;
    out.gx = Tensor::from_data_unchecked(sh, std::move(gx));
    return out;
}

SoftmaxCe softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const Shape& sh = logits.shape();
    require(sh.h == 1 && sh.w == 1, "softmax_cross_entropy: logits must be (B,K,1,1)");
    require(static_cast<int>(labels.size()) == sh.b, "softmax_cross_entropy: label count mismatch");
    std::vector<float> probs(logits.numel());
    const float* p = logits.data();
    double loss = 0.0;
    for (int bi = 0; bi < sh.b; ++bi) {
        const float* row = p + static_cast<std::size_t>(bi) * sh.c;
        float mx = row[0];
        for (int k = 1; k < sh.c; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (int k = 0; k < sh.c; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
        const double logz = std::log(z) + mx;
        int y = labels[bi];
        if (y < 0 || y >= sh.c) throw ConfigError("softmax_cross_entropy: label out of range");
        loss -= static_cast<double>(row[y]) - logz;
        float* prow = probs.data() + static_cast<std::size_t>(bi) * sh.c;
        for (int k = 0; k < sh.c; ++k) {
            prow[k] = static_cast<float>(std::exp(static_cast<double>(row[k]) - logz));
        }
    }
    SoftmaxCe r;
    r.loss = loss / sh.b;
    r.probs = Tensor::from_data_unchecked(sh, std::move(probs));
    return r;
}

Tensor softmax_cross_entropy_back(const Tensor& probs, const std::vector<int>& labels,
                                  float gloss) {
    const Shape& sh = probs.shape();
    std::vector<float> gx(probs.numel());
    const float* p = probs.data();
    const float k = gloss / static_cast<float>(sh.b);
    std::size_t i = 0;
    for (int bi = 0; bi < sh.b; ++bi) {
        for (int ci = 0; ci < sh.c; ++ci, ++i) {
            gx[i] = k * (p[i] - (ci == labels[bi] ? 1.0f : 0.0f));
        }
    }
    return Tensor::from_data_unchecked(sh, std::move(gx));
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
    const Shape& sh = x.shape();
    require(0 <= c0 && c0 < c1 && c1 <= sh.c, "slice_channels: bad channel range");
    Shape osh{sh.b, c1 - c0, sh.h, sh.w};
    std::vector<float> out(osh.numel());
    const std::size_t hw = sh.spatial();
    for (int bi = 0; bi < sh.b; ++bi) {
        const float* src = x.data() + (static_cast<std::size_t>(bi) * sh.c + c0) * hw;
        float* dst = out.data() + static_cast<std::size_t>(bi) * osh.c * hw;
        std::copy(src, src + static_cast<std::size_t>(osh.c) * hw, dst);
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    require(sa.b == sb.b && sa.h == sb.h && sa.w == sb.w, "concat_channels: shape mismatch");
    Shape osh{sa.b, sa.c + sb.c, sa.h, sa.w};
    std::vector<float> out(osh.numel());
    const std::size_t hw = sa.spatial();
    for (int bi = 0; bi < sa.b; ++bi) {
        float* dst = out.data() + static_cast<std::size_t>(bi) * osh.c * hw;
        const float* pa = a.data() + static_cast<std::size_t>(bi) * sa.c * hw;
        std::copy(pa, pa + static_cast<std::size_t>(sa.c) * hw, dst);
        const float* pb = b.data() + static_cast<std::size_t>(bi) * sb.c * hw;
        std::copy(pb, pb + static_cast<std::size_t>(sb.c) * hw,
                  dst + static_cast<std::size_t>(sa.c) * hw);
    }
    return Tensor::from_data_unchecked(osh, std::move(out));
}

double sum_all(const Tensor& x) {
    double acc = 0.0;
    const float* p = x.data();
    for (std::size_t i = 0; i < x.numel(); ++i) acc += p[i];
    return acc;
}

double dot(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "dot: shape mismatch");
    double acc = 0.0;
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(pa[i]) * pb[i];
    return acc;
}

}  // namespace invnorm::kernels
