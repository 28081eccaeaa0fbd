// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "invnorm/kernels.hpp"

namespace invnorm {

namespace k = kernels;

namespace {
constexpr float kScaleFloor = 1e-8f;
constexpr float kInitSigmaFloor = 1e-6f;
}  // namespace

// ---------------------------------------------------------------- Actnorm

Actnorm::Actnorm(int channels, const std::string& id_prefix) {
    if (channels < 1) throw ConfigError("actnorm: channels must be >= 1");
    s_ = Param(id_prefix + ".s", Tensor::full({1, channels, 1, 1}, 1.0f));
    b_ = Param(id_prefix + ".b", Tensor::zeros({1, channels, 1, 1}));
}

Actnorm Actnorm::identity(int channels, const std::string& id_prefix) {
    Actnorm a(channels, id_prefix);
    a.initialized_ = true;
    return a;
}

Actnorm Actnorm::with_params(std::vector<float> s, std::vector<float> b,
                             const std::string& id_prefix) {
    const int cs = static_cast<int>(s.size());
    const int cb = static_cast<int>(b.size());
    Actnorm a(cs, id_prefix);
    a.s_.value = Tensor::from_data({1, cs, 1, 1}, std::move(s));
    a.b_.value = Tensor::from_data({1, cb, 1, 1}, std::move(b));
    a.initialized_ = true;
    return a;
}

void Actnorm::initialize_from(const Tensor& x) {
    const Shape& sh = x.shape();
    if (sh.c != channels()) {
        throw ShapeError("actnorm init: expected " + std::to_string(channels()) + " channels");
    }
    const std::size_t hw = sh.spatial();
    const double m = static_cast<double>(hw) * sh.b;
    std::vector<float> s(sh.c), b(sh.c);
    for (int ci = 0; ci < sh.c; ++ci) {
        double s1 = 0.0, s2 = 0.0;
        for (int bi = 0; bi < sh.b; ++bi) {
            const float* p = x.data() + (static_cast<std::size_t>(bi) * sh.c + ci) * hw;
            for (std::size_t kk = 0; kk < hw; ++kk) {
                s1 += p[kk];
                s2 += static_cast<double>(p[kk]) * p[kk];
            }
        }
        const double mu = s1 / m;
        const double sigma = std::sqrt(std::max(0.0, s2 / m - mu * mu));
        if (sigma < kInitSigmaFloor) {
            s[ci] = 1.0f;
            b[ci] = 0.0f;
        } else {
            s[ci] = static_cast<float>(1.0 / sigma);
            b[ci] = static_cast<float>(-mu / sigma);
        }
    }
    s_.value = Tensor::from_data_unchecked(s_.value.shape(), std::move(s));
    b_.value = Tensor::from_data_unchecked(b_.value.shape(), std::move(b));
    initialized_ = true;
    check_ready("initialize");
}

void Actnorm::check_ready(const char* op) const {
    if (!initialized_) {
        throw StateError(std::string("actnorm ") + op + ": layer not initialized ('" + s_.id +
                         "')");
    }
    const float* s = s_.value.data();
    for (int ci = 0; ci < channels(); ++ci) {
        if (!(std::fabs(s[ci]) > kScaleFloor)) {
            throw SingularLayerError("actnorm: |s| <= 1e-8 at channel " + std::to_string(ci));
        }
    }
}

Tensor Actnorm::forward(const Tensor& x) {
    if (!initialized_) initialize_from(x);
    check_ready("forward");
    return k::channel_affine(x, s_.value.vec(), b_.value.vec());
}

Tensor Actnorm::inverse(const Tensor& y) const {
    check_ready("inverse");
    return k::channel_affine_inv(y, s_.value.vec(), b_.value.vec());
}

double Actnorm::logdet_for(const Shape& sh) const {
    check_ready("logdet");
    double acc = 0.0;
    const float* s = s_.value.data();
    for (int ci = 0; ci < channels(); ++ci) acc += std::log(std::fabs(static_cast<double>(s[ci])));
    return static_cast<double>(sh.h) * sh.w * acc;
}

double Actnorm::logdet(const Tensor& x) const { return logdet_for(x.shape()); }

Var Actnorm::apply(Tape& t, Var x) {
    if (!initialized_) initialize_from(t.value(x));
    check_ready("forward");
    return t_channel_affine(t, x, t.param(s_), t.param(b_));
}

Var Actnorm::apply_inverse(Tape& t, Var y) {
    check_ready("inverse");
    return t_channel_affine_inv(t, y, t.param(s_), t.param(b_));
}

// ------------------------------------------------------------- InvConv1x1

struct InvConv1x1::Factors {
    Eigen::MatrixXd lower;   // unit lower triangular
    Eigen::MatrixXd upper;   // upper with sign*exp(logdiag) diagonal
    std::vector<float> w;    // row-major C x C
    std::vector<float> w_t;  // transpose, row-major
    std::vector<float> w_inv;
    std::vector<float> w_inv_t;
};

InvConv1x1::InvConv1x1(int channels, const std::string& id_prefix) : channels_(channels) {
    if (channels < 1) throw ConfigError("invconv: channels must be >= 1");
    perm_.resize(channels);
    for (int i = 0; i < channels; ++i) perm_[i] = i;
    signs_.assign(channels, 1.0f);
    lower_ = Param(id_prefix + ".lower", Tensor::zeros({channels, channels, 1, 1}));
    upper_ = Param(id_prefix + ".upper", Tensor::zeros({channels, channels, 1, 1}));
    logdiag_ = Param(id_prefix + ".logdiag", Tensor::zeros({1, channels, 1, 1}));
}

InvConv1x1 InvConv1x1::identity(int channels, const std::string& id_prefix) {
    return InvConv1x1(channels, id_prefix);
}

InvConv1x1 InvConv1x1::from_matrix(int channels, const std::vector<float>& w,
                                   const std::string& id_prefix) {
    if (static_cast<int>(w.size()) != channels * channels) {
        throw ShapeError("invconv: weight matrix size mismatch");
    }
    Eigen::MatrixXd wd(channels, channels);
    for (int i = 0; i < channels; ++i) {
        for (int j = 0; j < channels; ++j) wd(i, j) = w[static_cast<std::size_t>(i) * channels + j];
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(wd);
    Eigen::MatrixXd lum = lu.matrixLU();
    InvConv1x1 conv(channels, id_prefix);
    std::vector<float> lower(static_cast<std::size_t>(channels) * channels, 0.0f);
    std::vector<float> upper(lower.size(), 0.0f);
    std::vector<float> logdiag(channels);
    for (int i = 0; i < channels; ++i) {
        const double d = lum(i, i);
        if (!std::isfinite(d) || std::fabs(d) < 1e-12) {
            throw SingularLayerError("invconv: matrix is not invertible");
        }
        conv.signs_[i] = d >= 0.0 ? 1.0f : -1.0f;
        logdiag[i] = static_cast<float>(std::log(std::fabs(d)));
        for (int j = 0; j < i; ++j) {
            lower[static_cast<std::size_t>(i) * channels + j] = static_cast<float>(lum(i, j));
        }
        for (int j = i + 1; j < channels; ++j) {
            upper[static_cast<std::size_t>(i) * channels + j] = static_cast<float>(lum(i, j));
        }
    }
    // permutationP() * W = L * U, so W = P^{-1} * L * U; read the row map
    // off the explicit inverse permutation matrix.
    Eigen::MatrixXd pinv =
        lu.permutationP().inverse() * Eigen::MatrixXd::Identity(channels, channels);
    for (int i = 0; i < channels; ++i) {
        for (int j = 0; j < channels; ++j) {
            if (pinv(i, j) > 0.5) conv.perm_[i] = j;
        }
    }
    conv.lower_.value = Tensor::from_data_unchecked(conv.lower_.value.shape(), std::move(lower));
    conv.upper_.value = Tensor::from_data_unchecked(conv.upper_.value.shape(), std::move(upper));
    conv.logdiag_.value =
        Tensor::from_data_unchecked(conv.logdiag_.value.shape(), std::move(logdiag));

    // Sanity: the factors must rebuild the input matrix.
    std::vector<float> rebuilt = conv.weight_matrix();
    double worst = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(rebuilt[i]) - w[i]));
    }
    if (worst > 1e-3) {
        throw SingularLayerError("invconv: PLU factorization failed to reproduce the matrix");
    }
    return conv;
}

InvConv1x1 InvConv1x1::random_orthogonal(int channels, Rng& rng, const std::string& id_prefix) {
    Eigen::MatrixXd g(channels, channels);
    for (int i = 0; i < channels; ++i) {
        for (int j = 0; j < channels; ++j) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(channels, channels);
    std::vector<float> w(static_cast<std::size_t>(channels) * channels);
    for (int i = 0; i < channels; ++i) {
        for (int j = 0; j < channels; ++j) {
            w[static_cast<std::size_t>(i) * channels + j] = static_cast<float>(q(i, j));
        }
    }
    return from_matrix(channels, w, id_prefix);
}

std::shared_ptr<const InvConv1x1::Factors> InvConv1x1::reconstruct() const {
    const int c = channels_;
    auto f = std::make_shared<Factors>();
    f->lower = Eigen::MatrixXd::Identity(c, c);
    f->upper = Eigen::MatrixXd::Zero(c, c);
    const float* lp = lower_.value.data();
    const float* up = upper_.value.data();
    const float* dp = logdiag_.value.data();
    for (int i = 0; i < c; ++i) {
        if (!std::isfinite(dp[i])) {
            throw SingularLayerError("invconv: non-finite log-diagonal");
        }
        for (int j = 0; j < i; ++j) f->lower(i, j) = lp[static_cast<std::size_t>(i) * c + j];
        for (int j = i + 1; j < c; ++j) f->upper(i, j) = up[static_cast<std::size_t>(i) * c + j];
        f->upper(i, i) = static_cast<double>(signs_[i]) * std::exp(static_cast<double>(dp[i]));
    }
    Eigen::MatrixXd lu = f->lower * f->upper;
    Eigen::MatrixXd wm(c, c);
    for (int i = 0; i < c; ++i) wm.row(i) = lu.row(perm_[i]);
    if (!wm.allFinite()) {
        throw SingularLayerError("invconv: reconstructed weight is not finite");
    }
    Eigen::MatrixXd winv = wm.inverse();
    if (!winv.allFinite()) {
        throw SingularLayerError("invconv: reconstructed weight is not invertible");
    }
    f->w.resize(static_cast<std::size_t>(c) * c);
    f->w_t.resize(f->w.size());
    f->w_inv.resize(f->w.size());
    f->w_inv_t.resize(f->w.size());
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) {
            f->w[static_cast<std::size_t>(i) * c + j] = static_cast<float>(wm(i, j));
            f->w_t[static_cast<std::size_t>(j) * c + i] = static_cast<float>(wm(i, j));
            f->w_inv[static_cast<std::size_t>(i) * c + j] = static_cast<float>(winv(i, j));
            f->w_inv_t[static_cast<std::size_t>(j) * c + i] = static_cast<float>(winv(i, j));
        }
    }
    return f;
}

std::vector<float> InvConv1x1::weight_matrix() const { return reconstruct()->w; }

Tensor InvConv1x1::forward(const Tensor& x) const {
    return k::matmul_channels(x, reconstruct()->w, channels_);
}

Tensor InvConv1x1::inverse(const Tensor& y) const {
    return k::matmul_channels(y, reconstruct()->w_inv, channels_);
}

double InvConv1x1::logdet_for(const Shape& sh) const {
    double acc = 0.0;
    const float* dp = logdiag_.value.data();
    for (int i = 0; i < channels_; ++i) acc += dp[i];
    return static_cast<double>(sh.h) * sh.w * acc;
}

double InvConv1x1::logdet(const Tensor& x) const { return logdet_for(x.shape()); }

namespace {

// Accumulated dL/dW for y = W x (or x = W^{-1} y), as a row-major C x C
// double matrix: gw[i][j] = sum over batch and sites of g_i * x_j.
Eigen::MatrixXd weight_grad(const Tensor& g, const Tensor& x) {
    const Shape& sh = x.shape();
    const int c = sh.c;
    const int hw = static_cast<int>(sh.spatial());
    Eigen::MatrixXf acc = Eigen::MatrixXf::Zero(c, c);
    for (int bi = 0; bi < sh.b; ++bi) {
        Eigen::Map<const Eigen::MatrixXf> xm(x.data() + static_cast<std::size_t>(bi) * c * hw, hw,
                                             c);
        Eigen::Map<const Eigen::MatrixXf> gm(g.data() + static_cast<std::size_t>(bi) * c * hw, hw,
                                             c);
        acc.noalias() += xm.transpose() * gm;  // acc(j,i) = sum g_i x_j
    }
    Eigen::MatrixXd gw(c, c);
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) gw(i, j) = acc(j, i);
    }
    return gw;
}

}  // namespace

Var InvConv1x1::apply(Tape& t, Var x) {
    auto f = reconstruct();
    Var lv = t.param(lower_);
    Var uv = t.param(upper_);
    Var dv = t.param(logdiag_);
    Tensor vx = t.value(x);
    Tensor out = k::matmul_channels(vx, f->w, channels_);
    const int c = channels_;
    auto perm = perm_;
    auto signs = signs_;
    return t.push(std::move(out), {x, lv, uv, dv},
                  [x, lv, uv, dv, vx, f, c, perm, signs](Tape& tp, const Tape::Node& n) {
                      Tensor g = Tensor::from_data_unchecked(vx.shape(), n.grad);
                      tp.add_grad(x, k::matmul_channels(g, f->w_t, c));
                      Eigen::MatrixXd gw = weight_grad(g, vx);
                      // W row i = (LU) row perm[i]
                      Eigen::MatrixXd gm(c, c);
                      for (int i = 0; i < c; ++i) gm.row(perm[i]) = gw.row(i);
                      Eigen::MatrixXd gl = gm * f->upper.transpose();
                      Eigen::MatrixXd gu = f->lower.transpose() * gm;
                      std::vector<float> glow(static_cast<std::size_t>(c) * c, 0.0f);
                      std::vector<float> gup(glow.size(), 0.0f);
                      std::vector<float> gld(c);
                      for (int i = 0; i < c; ++i) {
                          for (int j = 0; j < i; ++j) {
                              glow[static_cast<std::size_t>(i) * c + j] =
                                  static_cast<float>(gl(i, j));
                          }
                          for (int j = i + 1; j < c; ++j) {
                              gup[static_cast<std::size_t>(i) * c + j] =
                                  static_cast<float>(gu(i, j));
                          }
                          gld[i] = static_cast<float>(gu(i, i) * f->upper(i, i));
                      }
                      (void)signs;
                      tp.add_grad(lv, glow.data(), glow.size());
                      tp.add_grad(uv, gup.data(), gup.size());
                      tp.add_grad(dv, gld.data(), gld.size());
                  });
}

Var InvConv1x1::apply_inverse(Tape& t, Var y) {
    auto f = reconstruct();
    Var lv = t.param(lower_);
    Var uv = t.param(upper_);
    Var dv = t.param(logdiag_);
    Tensor vy = t.value(y);
    Tensor out = k::matmul_channels(vy, f->w_inv, channels_);
    Tensor vout = out;
    const int c = channels_;
    auto perm = perm_;
    return t.push(std::move(out), {y, lv, uv, dv},
                  [y, lv, uv, dv, vout, f, c, perm](Tape& tp, const Tape::Node& n) {
                      // x = W^{-1} y: gy = W^{-T} gx, gW = -gy x^T
                      Tensor gx = Tensor::from_data_unchecked(vout.shape(), n.grad);
                      Tensor gy = k::matmul_channels(gx, f->w_inv_t, c);
                      tp.add_grad(y, gy);
                      Eigen::MatrixXd gw = -weight_grad(gy, vout);
                      Eigen::MatrixXd gm(c, c);
                      for (int i = 0; i < c; ++i) gm.row(perm[i]) = gw.row(i);
                      Eigen::MatrixXd gl = gm * f->upper.transpose();
                      Eigen::MatrixXd gu = f->lower.transpose() * gm;
                      std::vector<float> glow(static_cast<std::size_t>(c) * c, 0.0f);
                      std::vector<float> gup(glow.size(), 0.0f);
                      std::vector<float> gld(c);
                      for (int i = 0; i < c; ++i) {
                          for (int j = 0; j < i; ++j) {
                              glow[static_cast<std::size_t>(i) * c + j] =
                                  static_cast<float>(gl(i, j));
                          }
                          for (int j = i + 1; j < c; ++j) {
                              gup[static_cast<std::size_t>(i) * c + j] =
                                  static_cast<float>(gu(i, j));
                          }
                          gld[i] = static_cast<float>(gu(i, i) * f->upper(i, i));
                      }
                      tp.add_grad(lv, glow.data(), glow.size());
                      tp.add_grad(uv, gup.data(), gup.size());
                      tp.add_grad(dv, gld.data(), gld.size());
                  });
}

// ---------------------------------------------------------------- Coupling

Coupling::Coupling(int channels, int hidden, Rng& rng, const std::string& id_prefix)
    : channels_(channels), split_d_(channels / 2), hidden_(hidden) {
    if (channels < 2) throw ConfigError("coupling: needs at least 2 channels");
    if (hidden < 1) throw ConfigError("coupling: hidden width must be >= 1");
    const int active = channels_ - split_d_;
    std::vector<float> w1(static_cast<std::size_t>(hidden) * split_d_ * 9);
    const float std1 = std::sqrt(2.0f / (static_cast<float>(split_d_) * 9.0f));
    for (float& v : w1) v = static_cast<float>(rng.normal()) * std1;
    w1_ = Param(id_prefix + ".f.w1",
                Tensor::from_data_unchecked({hidden, split_d_, 3, 3}, std::move(w1)));
    b1_ = Param(id_prefix + ".f.b1", Tensor::zeros({1, hidden, 1, 1}));
    // Zero-initialized final stage: the coupling starts as the identity.
    w2_ = Param(id_prefix + ".f.w2", Tensor::zeros({active, hidden, 3, 3}));
    b2_ = Param(id_prefix + ".f.b2", Tensor::zeros({1, active, 1, 1}));
}

Coupling Coupling::identity(int channels, int hidden, const std::string& id_prefix) {
    Rng rng(0);
    Coupling c(channels, hidden, rng, id_prefix);
    c.w1_.value = Tensor::zeros(c.w1_.value.shape());
    return c;
}

Tensor Coupling::f(const Tensor& passive) const {
    Tensor h = k::conv3x3(passive, w1_.value, b1_.value);
    h = k::tanh_act(h);
    return k::conv3x3(h, w2_.value, b2_.value);
}

Tensor Coupling::forward(const Tensor& x) const {
    const Shape& sh = x.shape();
    if (sh.c != channels_) {
        throw ShapeError("coupling forward: expected " + std::to_string(channels_) + " channels");
    }
    Tensor passive = k::slice_channels(x, 0, split_d_);
    Tensor active = k::slice_channels(x, split_d_, channels_);
    Tensor fx = f(passive);
    if (!(fx.shape() == active.shape())) {
        throw ShapeError("coupling: f output shape " + fx.shape().str() +
                         " does not match active partition " + active.shape().str());
    }
    return k::concat_channels(passive, k::sub(active, fx));
}

Tensor Coupling::inverse(const Tensor& y) const {
    const Shape& sh = y.shape();
    if (sh.c != channels_) {
        throw ShapeError("coupling inverse: expected " + std::to_string(channels_) + " channels");
    }
    Tensor passive = k::slice_channels(y, 0, split_d_);
    Tensor active = k::slice_channels(y, split_d_, channels_);
    Tensor fx = f(passive);
    if (!(fx.shape() == active.shape())) {
        throw ShapeError("coupling: f output shape mismatch");
    }
    return k::concat_channels(passive, k::add(active, fx));
}

Var Coupling::f_taped(Tape& t, Var passive) {
    Var h = t_conv3x3(t, passive, t.param(w1_), t.param(b1_));
    h = t_tanh(t, h);
    return t_conv3x3(t, h, t.param(w2_), t.param(b2_));
}

Var Coupling::apply(Tape& t, Var x) {
    if (t.shape(x).c != channels_) {
        throw ShapeError("coupling forward: channel mismatch");
    }
    Var passive = t_slice_channels(t, x, 0, split_d_);
    Var active = t_slice_channels(t, x, split_d_, channels_);
    Var fx = f_taped(t, passive);
    return t_concat_channels(t, passive, t_sub(t, active, fx));
}

Var Coupling::apply_inverse(Tape& t, Var y) {
    if (t.shape(y).c != channels_) {
        throw ShapeError("coupling inverse: channel mismatch");
    }
    Var passive = t_slice_channels(t, y, 0, split_d_);
    Var active = t_slice_channels(t, y, split_d_, channels_);
    Var fx = f_taped(t, passive);
    return t_concat_channels(t, passive, t_add(t, active, fx));
}

// ---------------------------------------------------------------- FlowStep

FlowStep FlowStep::random_init(int channels, int hidden, Rng& rng, const std::string& id_prefix) {
    return FlowStep(Actnorm(channels, id_prefix + ".actnorm"),
                    InvConv1x1::random_orthogonal(channels, rng, id_prefix + ".invconv"),
                    Coupling(channels, hidden, rng, id_prefix + ".coupling"));
}

FlowStep FlowStep::identity_init(int channels, int hidden, const std::string& id_prefix) {
    return FlowStep(Actnorm::identity(channels, id_prefix + ".actnorm"),
                    InvConv1x1::identity(channels, id_prefix + ".invconv"),
                    Coupling::identity(channels, hidden, id_prefix + ".coupling"));
}

Tensor FlowStep::forward(const Tensor& x, double* logdet) {
    Tensor h = actnorm_.forward(x);
    if (logdet != nullptr) {
        *logdet += actnorm_.logdet_for(x.shape()) + invconv_.logdet_for(x.shape());
    }
    h = invconv_.forward(h);
    return coupling_.forward(h);
}

Tensor FlowStep::inverse(const Tensor& y) const {
    Tensor h = coupling_.inverse(y);
    h = invconv_.inverse(h);
    return actnorm_.inverse(h);
}

double FlowStep::logdet(const Tensor& x) const {
    return actnorm_.logdet_for(x.shape()) + invconv_.logdet_for(x.shape()) +
           coupling_.logdet(x);
}

Var FlowStep::apply(Tape& t, Var x, double* logdet) {
    if (logdet != nullptr) {
        // Actnorm may initialize inside apply; compute its contribution after.
        Var h = actnorm_.apply(t, x);
        *logdet += actnorm_.logdet_for(t.shape(x)) + invconv_.logdet_for(t.shape(x));
        h = invconv_.apply(t, h);
        return coupling_.apply(t, h);
    }
    Var h = actnorm_.apply(t, x);
    h = invconv_.apply(t, h);
    return coupling_.apply(t, h);
}

Var FlowStep::apply_inverse(Tape& t, Var y) {
    Var h = coupling_.apply_inverse(t, y);
    h = invconv_.apply_inverse(t, h);
    return actnorm_.apply_inverse(t, h);
}

std::vector<Param*> FlowStep::params() {
    std::vector<Param*> out = actnorm_.params();
    for (Param* p : invconv_.params()) out.push_back(p);
    for (Param* p : coupling_.params()) out.push_back(p);
    return out;
}

std::size_t FlowStep::param_count() const {
    return actnorm_.param_count() + invconv_.param_count() + coupling_.param_count();
}

// --------------------------------------------------------------- FlowLayer

Tensor flow_layer_forward(FlowLayer& layer, const Tensor& x) {
    return std::visit([&](auto& l) { return l.forward(x); }, layer);
}

Tensor flow_layer_inverse(const FlowLayer& layer, const Tensor& y) {
    return std::visit([&](const auto& l) { return l.inverse(y); }, layer);
}

double flow_layer_logdet(const FlowLayer& layer, const Tensor& x) {
    return std::visit([&](const auto& l) { return l.logdet(x); }, layer);
}

const char* flow_layer_name(const FlowLayer& layer) {
    switch (layer.index()) {
        case 0: return "actnorm";
        case 1: return "invconv1x1";
        default: return "coupling";
    }
}

}  // namespace invnorm
