// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/classifier.hpp"

#include <cmath>

#include "invnorm/kernels.hpp"
#include "invnorm/rng.hpp"

namespace invnorm {

namespace k = kernels;

namespace {

Tensor he_normal(const Shape& sh, Rng& rng, int fan_in) {
    const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
    std::vector<float> v(sh.numel());
    for (float& x : v) x = static_cast<float>(rng.normal()) * stddev;
    return Tensor::from_data_unchecked(sh, std::move(v));
}

}  // namespace

SmallCnn::SmallCnn(const ClassifierConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.in_channels < 1 || cfg.classes < 2 || cfg.width1 < 1 || cfg.width2 < 1 ||
        cfg.width3 < 1) {
        throw ConfigError("classifier: invalid configuration");
    }
    Rng rng(seed);
    w1_ = Param("cnn.w1", he_normal({cfg.width1, cfg.in_channels, 3, 3}, rng,
                                    cfg.in_channels * 9));
    b1_ = Param("cnn.b1", Tensor::zeros({1, cfg.width1, 1, 1}));
    w2_ = Param("cnn.w2", he_normal({cfg.width2, cfg.width1, 3, 3}, rng, cfg.width1 * 9));
    b2_ = Param("cnn.b2", Tensor::zeros({1, cfg.width2, 1, 1}));
    w3_ = Param("cnn.w3", he_normal({cfg.width3, cfg.width2, 3, 3}, rng, cfg.width2 * 9));
    b3_ = Param("cnn.b3", Tensor::zeros({1, cfg.width3, 1, 1}));
    fw_ = Param("cnn.fc.w", he_normal({cfg.classes, cfg.width3, 1, 1}, rng, cfg.width3));
    fb_ = Param("cnn.fc.b", Tensor::zeros({1, cfg.classes, 1, 1}));
}

Tensor SmallCnn::logits(const Tensor& x) const {
    if (x.shape().h % 8 != 0 || x.shape().w % 8 != 0) {
        throw ShapeError("classifier: H and W must be divisible by 8, got " + x.shape().str());
    }
    Tensor h = k::avgpool2(k::relu(k::conv3x3(x, w1_.value, b1_.value)));
    h = k::avgpool2(k::relu(k::conv3x3(h, w2_.value, b2_.value)));
    h = k::avgpool2(k::relu(k::conv3x3(h, w3_.value, b3_.value)));
    h = k::global_avg_pool(h);
    return k::linear(h, fw_.value, fb_.value);
}

Var SmallCnn::apply(Tape& t, Var x) {
    if (t.shape(x).h % 8 != 0 || t.shape(x).w % 8 != 0) {
        throw ShapeError("classifier: H and W must be divisible by 8");
    }
    Var h = t_avgpool2(t, t_relu(t, t_conv3x3(t, x, t.param(w1_), t.param(b1_))));
    h = t_avgpool2(t, t_relu(t, t_conv3x3(t, h, t.param(w2_), t.param(b2_))));
    h = t_avgpool2(t, t_relu(t, t_conv3x3(t, h, t.param(w3_), t.param(b3_))));
    h = t_global_avg_pool(t, h);
    return t_linear(t, h, t.param(fw_), t.param(fb_));
}

std::size_t SmallCnn::param_count() const {
    std::size_t n = 0;
    for (const Param* p : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_, &fw_, &fb_}) {
        n += p->value.numel();
    }
    return n;
}

}  // namespace invnorm
