// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "invnorm/checks.hpp"
#include "invnorm/kernels.hpp"
#include "invnorm/model.hpp"
#include "invnorm/refmath.hpp"
#include "invnorm/rng.hpp"
#include "invnorm/serialize.hpp"

using namespace invnorm;
namespace k = kernels;

namespace {

InvNormModel warmed_random_model(const ModelConfig& cfg, std::uint64_t seed, int hw) {
    InvNormModel m = InvNormModel::random_init(cfg, seed);
    Rng rng(Rng::mix(seed, 0x77));
    Tensor warmup = random_uniform({8, cfg.input_channels, hw, hw}, rng, -1.0f, 1.0f);
    SqueezeStack st;
    m.encode(warmup, st);  // triggers all actnorm data-dependent inits
    return m;
}

void per_channel_stats(const Tensor& y, int b, int c, double* mu, double* sd) {
    double s1 = 0.0, s2 = 0.0;
    for (int h = 0; h < y.shape().h; ++h) {
        for (int w = 0; w < y.shape().w; ++w) {
            double v = y.at(b, c, h, w);
            s1 += v;
            s2 += v * v;
        }
    }
    double m = static_cast<double>(y.shape().spatial());
    *mu = s1 / m;
    *sd = std::sqrt(std::max(0.0, s2 / m - (s1 / m) * (s1 / m)));
}

}  // namespace

TEST_CASE("encode shapes: two squeezes give 16x channels and ceil-quartered dims") {
    InvNormModel m = InvNormModel::identity_init({3, 5, 8});
    SqueezeStack st;
    Rng rng(1);
    Tensor x = random_uniform({2, 3, 64, 64}, rng, 0.0f, 1.0f);
    auto enc = m.encode(x, st);
    CHECK(enc.features.shape() == Shape{2, 48, 16, 16});
    CHECK(st.records.size() == 2);

    SqueezeStack st2;
    Tensor x2 = random_uniform({1, 3, 63, 65}, rng, 0.0f, 1.0f);
    auto enc2 = m.encode(x2, st2);
    CHECK(enc2.features.shape() == Shape{1, 48, 16, 17});
    CHECK(m.decode(enc2.features, st2).shape() == Shape{1, 3, 63, 65});
}

TEST_CASE("identity-initialized model encodes as a pure double squeeze with zero log-det") {
    InvNormModel m = InvNormModel::identity_init({3, 5, 8});
    Rng rng(2);
    Tensor x = random_uniform({2, 3, 12, 10}, rng, -1.0f, 1.0f);
    SqueezeStack st;
    auto enc = m.encode(x, st);
    Tensor expect = squeeze_forward(squeeze_forward(x).first).first;
    CHECK(bit_equal(enc.features, expect));
    for (double ld : enc.logdet) CHECK(ld == 0.0);
    // identity flows invert exactly: decode is the inverse permutation
    CHECK(bit_equal(m.decode(enc.features, st), x));
}

TEST_CASE("decode(encode(x)) round-trips within 1e-4 across shapes, random init") {
    for (Shape sh : {Shape{1, 3, 32, 32}, Shape{2, 3, 63, 65}, Shape{4, 1, 7, 7}}) {
        ModelConfig cfg{sh.c, 2, 8};
        InvNormModel m = warmed_random_model(cfg, 40 + static_cast<std::uint64_t>(sh.c), sh.h);
        Rng rng(50 + static_cast<std::uint64_t>(sh.w));
        Tensor x = random_uniform(sh, rng, -3.0f, 3.0f);
        SqueezeStack st;
        auto enc = m.encode(x, st);
        Tensor back = m.decode(enc.features, st);
        CHECK(max_abs_diff(back, x) < 1e-4f);
        CHECK(st.empty());
    }
}

TEST_CASE("decode validates records and channel counts") {
    InvNormModel m = InvNormModel::identity_init({3, 2, 8});
    SqueezeStack st;
    Rng rng(3);
    CHECK_THROWS_AS(m.decode(Tensor::zeros({1, 48, 8, 8}), st), StateError);  // no records

    Tensor x = random_uniform({1, 3, 32, 32}, rng, 0.0f, 1.0f);
    auto enc = m.encode(x, st);
    CHECK_THROWS_AS(m.decode(Tensor::zeros({1, 24, 8, 8}), st), StateError);  // bad channels
    CHECK_THROWS_AS(m.decode(Tensor::zeros({1, 48, 4, 4}), st), StateError);  // record mismatch
    CHECK(st.records.size() == 2);  // failed decodes must not consume records
    CHECK(bit_equal(m.decode(enc.features, st), x));
}

TEST_CASE("internal record stack supports the encode-then-decode pattern") {
    InvNormModel m = InvNormModel::identity_init({1, 1, 4});
    Rng rng(4);
    Tensor x = random_uniform({1, 1, 9, 7}, rng, -1.0f, 1.0f);
    auto enc = m.encode(x);
    Tensor back = m.decode(enc.features);
    CHECK(bit_equal(back, x));
    CHECK_THROWS_AS(m.decode(enc.features), StateError);  // records consumed
}

TEST_CASE("instance normalize: standardization under unit affine") {
    InstanceNorm in_layer(2, 1e-5f, "t.in");
    Rng rng(5);
    Tensor z = random_normal({2, 2, 8, 8}, rng, 5.0f, 2.0f);
    auto [out, stats] = in_layer.forward(z);
    for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 2; ++c) {
            double mu, sd;
            per_channel_stats(out, b, c, &mu, &sd);
            CHECK(std::fabs(mu) < 1e-3);
            CHECK(std::fabs(sd - 1.0) < 1e-2);
            CHECK(stats.sigma[static_cast<std::size_t>(b) * 2 + c] > 0.0f);
        }
    }
}

TEST_CASE("instance normalize: constant channel maps to beta with no NaN") {
    InstanceNorm in_layer(2, 1e-5f, "t.in");
    in_layer.beta().value = Tensor::from_data({1, 2, 1, 1}, {0.7f, -0.2f});
    std::vector<float> zv(2 * 2 * 4 * 4, 3.25f);  // both channels constant
    Tensor z = Tensor::from_data_unchecked({2, 2, 4, 4}, std::move(zv));
    auto [out, stats] = in_layer.forward(z);
    CHECK(out.all_finite());
    for (int b = 0; b < 2; ++b) {
        for (int h = 0; h < 4; ++h) {
            for (int w = 0; w < 4; ++w) {
                CHECK(out.at(b, 0, h, w) == 0.7f);
                CHECK(out.at(b, 1, h, w) == -0.2f);
            }
        }
    }
    (void)stats;
}

TEST_CASE("instance normalize cancels per-channel affine restyling") {
    InstanceNorm in_layer(3, 1e-5f, "t.in");
    Rng rng(6);
    Tensor z1 = random_uniform({1, 3, 6, 6}, rng, -1.0f, 1.0f);
    const float a[3] = {0.5f, 1.7f, 2.2f};
    const float c[3] = {0.3f, -0.4f, 0.1f};
    std::vector<float> z2v(z1.numel());
    for (int ci = 0; ci < 3; ++ci) {
        for (int h = 0; h < 6; ++h) {
            for (int w = 0; w < 6; ++w) {
                z2v[z1.index(0, ci, h, w)] = a[ci] * z1.at(0, ci, h, w) + c[ci];
            }
        }
    }
    Tensor z2 = Tensor::from_data_unchecked(z1.shape(), std::move(z2v));
    Tensor o1 = in_layer.forward(z1).first;
    Tensor o2 = in_layer.forward(z2).first;
    CHECK(max_abs_diff(o1, o2) < 1e-4f);
}

TEST_CASE("instance normalize: post-IN stats equal beta and gamma; idempotence") {
    InstanceNorm in_layer(3, 1e-5f, "t.in");
    Rng rng(7);
    in_layer.gamma().value = random_uniform({1, 3, 1, 1}, rng, 0.5f, 1.5f);
    in_layer.beta().value = random_uniform({1, 3, 1, 1}, rng, -0.5f, 0.5f);
    Tensor z = random_normal({2, 3, 8, 8}, rng, -2.0f, 3.0f);
    Tensor out = in_layer.forward(z).first;
    for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 3; ++c) {
            double mu, sd;
            per_channel_stats(out, b, c, &mu, &sd);
            CHECK(std::fabs(mu - in_layer.beta().value.data()[c]) < 1e-3);
            CHECK(std::fabs(sd - std::fabs(in_layer.gamma().value.data()[c])) < 1e-2);
        }
    }

    InstanceNorm unit(3, 1e-5f, "t.unit");
    Tensor once = unit.forward(z).first;
    Tensor twice = unit.forward(once).first;
    CHECK(max_abs_diff(once, twice) < 1e-4f);
}

TEST_CASE("invnorm forward: output shape equals input shape") {
    ModelConfig cfg{3, 2, 8};
    InvNormModel m = warmed_random_model(cfg, 60, 36);
    Rng rng(8);
    Tensor x = random_uniform({2, 3, 37, 41}, rng, 0.0f, 1.0f);
    auto r = m.forward(x);
    CHECK(r.output.shape() == x.shape());
    CHECK(r.stats.channels == 48);
    CHECK(r.stats.batch == 2);
    CHECK(r.logdet.size() == 2);
}

TEST_CASE("invnorm forward under identity flows is feature-space standardization") {
    InvNormModel m = InvNormModel::identity_init({3, 5, 8});
    Rng rng(9);
    Tensor x = random_uniform({1, 3, 10, 14}, rng, 0.0f, 1.0f);
    auto r = m.forward(x);
    auto [z1, rec1] = squeeze_forward(x);
    auto [z2, rec2] = squeeze_forward(z1);
    Tensor normalized = m.instance_norm().forward(z2).first;
    Tensor expect = squeeze_inverse(squeeze_inverse(normalized, rec2), rec1);
    CHECK(bit_equal(r.output, expect));
}

TEST_CASE("style collapse: per-channel affine styles shrink by 10x or more") {
    InvNormModel m = InvNormModel::identity_init({3, 5, 32});
    Rng rng(10);
    Tensor x1 = random_uniform({1, 3, 16, 16}, rng, 0.1f, 0.9f);
    const float a[3] = {0.55f, 1.60f, 1.20f};
    const float c[3] = {0.10f, -0.20f, 0.30f};
    std::vector<float> x2v(x1.numel());
    for (int ci = 0; ci < 3; ++ci) {
        for (int h = 0; h < 16; ++h) {
            for (int w = 0; w < 16; ++w) {
                x2v[x1.index(0, ci, h, w)] = a[ci] * x1.at(0, ci, h, w) + c[ci];
            }
        }
    }
    Tensor x2 = Tensor::from_data_unchecked(x1.shape(), std::move(x2v));
    double din = l2_diff(x1, x2);
    REQUIRE(din > 0.1);
    Tensor o1 = m.forward(x1).output;
    Tensor o2 = m.forward(x2).output;
    double dout = l2_diff(o1, o2);
    CHECK(dout <= din / 10.0);
}

TEST_CASE("tiny model: encode log-det matches the dense Jacobian oracle") {
    ModelConfig cfg{1, 1, 4};
    InvNormModel m = warmed_random_model(cfg, 70, 4);
    Rng wrng(71);
    for (FlowStep& s : m.block1()) {
        s.coupling().conv2_weight().value =
            random_uniform(s.coupling().conv2_weight().value.shape(), wrng, -0.3f, 0.3f);
    }
    Rng rng(11);
    Tensor x = random_uniform({1, 1, 4, 4}, rng, -1.0f, 1.0f);
    SqueezeStack st;
    auto enc = m.encode(x, st);
    REQUIRE(enc.features.numel() == 16);
    auto fn = [&](const Tensor& t) {
        SqueezeStack local;
        return m.encode(t, local).features;
    };
    double dense = dense_jacobian_logdet(fn, x, 1e-3);
    CHECK(std::fabs(dense - enc.logdet[0]) < 1e-2);
}

TEST_CASE("taped pipeline matches eager forward and reference gradients") {
    ModelConfig cfg{1, 1, 4};
    InvNormModel m = warmed_random_model(cfg, 80, 8);
    Rng rng(12);
    // activate the couplings so their first-stage weights matter
    for (auto* block : {&m.block1(), &m.block2()}) {
        for (FlowStep& s : *block) {
            s.coupling().conv2_weight().value = random_uniform(
                s.coupling().conv2_weight().value.shape(), rng, -0.3f, 0.3f);
        }
    }
    Tensor x = random_uniform({1, 1, 8, 8}, rng, 0.5f, 2.5f);
    Tensor w = random_uniform(x.shape(), rng, 0.5f, 1.5f);

    // value agreement: tape vs eager vs double reference
    Tape t;
    Var out = m.apply(t, t.input(x));
    Tensor eager = m.forward(x).output;
    CHECK(bit_equal(t.value(out), eager));
    ref::DTensor r = ref::model_forward(m, ref::from(x));
    CHECK(max_rel_error(eager, Tensor::from_data_unchecked(r.shape,
                                                           std::vector<float>(r.v.begin(),
                                                                              r.v.end())),
                        1e-3) < 1e-3);

    // gradient agreement for every parameter in the pipeline
    for (Param* p : m.params()) p->zero_grad();
    Tape t2;
    Var out2 = m.apply(t2, t2.input(x));
    t2.backward(t_dot_const(t2, out2, w));
    for (Param* p : m.params()) {
        REQUIRE_MESSAGE(p->has_grad(), "param ", p->id, " missing grad");
        Tensor analytic = p->grad_tensor();
        Tensor saved = p->value;
        auto loss_of = [&](const Tensor& v) {
            p->value = v;
            double val = ref::dot(ref::model_forward(m, ref::from(x)), w);
            return val;
        };
        Tensor fd = finite_diff_grad(loss_of, saved, 1e-3);
        p->value = saved;
        double worst = max_rel_error(analytic, fd, 1e-4);
        CHECK_MESSAGE(worst < 1e-3, "param ", p->id, " worst rel err ", worst);
    }
}

TEST_CASE("serialization: save/load/forward is bit-identical") {
    ModelConfig cfg{2, 2, 6};
    InvNormModel m = warmed_random_model(cfg, 90, 12);
    std::string path = "test_model_roundtrip.invnorm";
    save_model(m, path);
    InvNormModel loaded = load_model(path);
    CHECK(loaded.config().input_channels == 2);
    CHECK(loaded.config().flows_per_block == 2);
    CHECK(loaded.param_count() == m.param_count());

    Rng rng(13);
    Tensor x = random_uniform({2, 2, 13, 11}, rng, -1.0f, 1.0f);
    Tensor y1 = m.forward(x).output;
    Tensor y2 = loaded.forward(x).output;
    CHECK(bit_equal(y1, y2));
    std::remove(path.c_str());
}

TEST_CASE("serialization: corruption and version mismatches are rejected") {
    ModelConfig cfg{1, 1, 4};
    InvNormModel m = InvNormModel::identity_init(cfg);
    std::vector<unsigned char> bytes = model_to_bytes(m);

    // flip one payload byte -> checksum must fail
    std::vector<unsigned char> corrupted = bytes;
    corrupted[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(model_from_bytes(corrupted), FormatError);

    // truncated file
    std::vector<unsigned char> truncated(bytes.begin(), bytes.begin() + 10);
    CHECK_THROWS_AS(model_from_bytes(truncated), FormatError);

    // version 0 is rejected with an explicit message (re-checksummed so the
    // version check, not the CRC, fires)
    std::vector<unsigned char> v0(bytes.begin(), bytes.end() - 4);
    v0[4] = 0;
    ByteWriter w;
    w.put_bytes(v0.data(), v0.size());
    w.finish_with_crc();
    try {
        model_from_bytes(w.bytes());
        FAIL("version 0 should be rejected");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("version 0") != std::string::npos);
    }

    // wrong magic
    std::vector<unsigned char> badmagic(bytes.begin(), bytes.end() - 4);
    badmagic[0] = 'X';
    ByteWriter w2;
    w2.put_bytes(badmagic.data(), badmagic.size());
    w2.finish_with_crc();
    CHECK_THROWS_AS(model_from_bytes(w2.bytes()), FormatError);
}

TEST_CASE("param_count reflects effective learnable entries") {
    ModelConfig cfg{1, 1, 4};
    InvNormModel m = InvNormModel::identity_init(cfg);
    // block1 at C=4: actnorm 8, invconv 16, coupling (4*2*9 + 4 + 2*4*9 + 2)
    // block2 at C=16: actnorm 32, invconv 256, coupling (4*8*9 + 4 + 8*4*9 + 8)
    // in: 32
    std::size_t expect = (8 + 16 + (72 + 4 + 72 + 2)) + (32 + 256 + (288 + 4 + 288 + 8)) + 32;
    CHECK(m.param_count() == expect);
}
