// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/model.hpp"

#include "invnorm/kernels.hpp"

namespace invnorm {

namespace k = kernels;

InstanceNorm::InstanceNorm(int channels, float eps, const std::string& id_prefix) : eps_(eps) {
    if (channels < 1) throw ConfigError("instance norm: channels must be >= 1");
    if (!(eps > 0.0f)) throw ConfigError("instance norm: eps must be > 0");
    gamma_ = Param(id_prefix + ".gamma", Tensor::full({1, channels, 1, 1}, 1.0f));
    beta_ = Param(id_prefix + ".beta", Tensor::zeros({1, channels, 1, 1}));
}

std::pair<Tensor, StyleStats> InstanceNorm::forward(const Tensor& z) const {
    if (z.shape().c != channels()) {
        throw ShapeError("instance norm: expected " + std::to_string(channels()) +
                         " channels, got " + std::to_string(z.shape().c));
    }
    auto [out, st] = k::instance_norm(z, gamma_.value.vec(), beta_.value.vec(), eps_);
    StyleStats stats;
    stats.batch = st.batch;
    stats.channels = st.channels;
    stats.mu = std::move(st.mu);
    stats.sigma = std::move(st.sigma);
    return {std::move(out), std::move(stats)};
}

Var InstanceNorm::apply(Tape& t, Var z) {
    if (t.shape(z).c != channels()) {
        throw ShapeError("instance norm: channel mismatch");
    }
    return t_instance_norm(t, z, t.param(gamma_), t.param(beta_), eps_);
}

InvNormModel InvNormModel::random_init(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.input_channels < 1 || cfg.flows_per_block < 1 || cfg.coupling_hidden < 1) {
        throw ConfigError("invnorm model: invalid configuration");
    }
    Rng rng(seed);
    std::vector<FlowStep> b1, b2;
    const int c1 = 4 * cfg.input_channels;
    const int c2 = 16 * cfg.input_channels;
    for (int i = 0; i < cfg.flows_per_block; ++i) {
        b1.push_back(FlowStep::random_init(c1, cfg.coupling_hidden, rng,
                                           "block1.step" + std::to_string(i)));
    }
    for (int i = 0; i < cfg.flows_per_block; ++i) {
        b2.push_back(FlowStep::random_init(c2, cfg.coupling_hidden, rng,
                                           "block2.step" + std::to_string(i)));
    }
    return InvNormModel(cfg, std::move(b1), std::move(b2), InstanceNorm(c2, 1e-5f, "in"));
}

InvNormModel InvNormModel::identity_init(const ModelConfig& cfg) {
    if (cfg.input_channels < 1 || cfg.flows_per_block < 1 || cfg.coupling_hidden < 1) {
        throw ConfigError("invnorm model: invalid configuration");
    }
    std::vector<FlowStep> b1, b2;
    const int c1 = 4 * cfg.input_channels;
    const int c2 = 16 * cfg.input_channels;
    for (int i = 0; i < cfg.flows_per_block; ++i) {
        b1.push_back(FlowStep::identity_init(c1, cfg.coupling_hidden,
                                             "block1.step" + std::to_string(i)));
    }
    for (int i = 0; i < cfg.flows_per_block; ++i) {
        b2.push_back(FlowStep::identity_init(c2, cfg.coupling_hidden,
                                             "block2.step" + std::to_string(i)));
    }
    return InvNormModel(cfg, std::move(b1), std::move(b2), InstanceNorm(c2, 1e-5f, "in"));
}

void InvNormModel::check_encode_input(const Shape& sh) const {
    if (sh.c != cfg_.input_channels) {
        throw ShapeError("encode: expected " + std::to_string(cfg_.input_channels) +
                         " input channels, got " + std::to_string(sh.c));
    }
}

InvNormModel::EncodeResult InvNormModel::encode(const Tensor& x, SqueezeStack& stack) {
    check_encode_input(x.shape());
    double ld = 0.0;
    auto [h, rec1] = squeeze_forward(x);
    stack.push(rec1);
    for (FlowStep& step : block1_) h = step.forward(h, &ld);
    auto [h2, rec2] = squeeze_forward(h);
    stack.push(rec2);
    for (FlowStep& step : block2_) h2 = step.forward(h2, &ld);
    EncodeResult r;
    r.features = std::move(h2);
    r.logdet.assign(static_cast<std::size_t>(x.shape().b), ld);
    return r;
}

Tensor InvNormModel::decode(const Tensor& z, SqueezeStack& stack) const {
    const Shape& sh = z.shape();
    if (sh.c != 16 * cfg_.input_channels) {
        throw StateError("decode: expected " + std::to_string(16 * cfg_.input_channels) +
                         " feature channels, got " + std::to_string(sh.c));
    }
    if (stack.records.size() < 2) {
        throw StateError("decode: squeeze records missing (encode this input first)");
    }
    SqueezeRecord rec2 = stack.records[stack.records.size() - 1];
    SqueezeRecord rec1 = stack.records[stack.records.size() - 2];
    if ((rec2.orig_h + 1) / 2 != sh.h || (rec2.orig_w + 1) / 2 != sh.w) {
        throw StateError("decode: squeeze record does not match feature shape " + sh.str());
    }
    if ((rec1.orig_h + 1) / 2 != rec2.orig_h || (rec1.orig_w + 1) / 2 != rec2.orig_w) {
        throw StateError("decode: squeeze records are inconsistent");
    }
    stack.pop();
    stack.pop();
    Tensor h = z;
    for (auto it = block2_.rbegin(); it != block2_.rend(); ++it) h = it->inverse(h);
    h = squeeze_inverse(h, rec2);
    for (auto it = block1_.rbegin(); it != block1_.rend(); ++it) h = it->inverse(h);
    return squeeze_inverse(h, rec1);
}

InvNormModel::ForwardResult InvNormModel::forward(const Tensor& x) {
    SqueezeStack stack;
    EncodeResult enc = encode(x, stack);
    auto [normalized, stats] = in_.forward(enc.features);
    ForwardResult r;
    r.output = decode(normalized, stack);
    r.stats = std::move(stats);
    r.logdet = std::move(enc.logdet);
    return r;
}

Var InvNormModel::apply(Tape& t, Var x) {
    check_encode_input(t.shape(x));
    auto [h, rec1] = t_squeeze(t, x);
    for (FlowStep& step : block1_) h = step.apply(t, h);
    auto [h2, rec2] = t_squeeze(t, h);
    for (FlowStep& step : block2_) h2 = step.apply(t, h2);
    Var z = in_.apply(t, h2);
    for (auto it = block2_.rbegin(); it != block2_.rend(); ++it) z = it->apply_inverse(t, z);
    z = t_unsqueeze(t, z, rec2);
    for (auto it = block1_.rbegin(); it != block1_.rend(); ++it) z = it->apply_inverse(t, z);
    return t_unsqueeze(t, z, rec1);
}

std::vector<Param*> InvNormModel::params() {
    std::vector<Param*> out;
    for (FlowStep& s : block1_) {
        for (Param* p : s.params()) out.push_back(p);
    }
    for (FlowStep& s : block2_) {
        for (Param* p : s.params()) out.push_back(p);
    }
    for (Param* p : in_.params()) out.push_back(p);
    return out;
}

std::size_t InvNormModel::param_count() const {
    std::size_t n = 0;
    for (const FlowStep& s : block1_) n += s.param_count();
    for (const FlowStep& s : block2_) n += s.param_count();
    n += in_.param_count();
    return n;
}

}  // namespace invnorm
