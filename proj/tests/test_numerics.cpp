// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "invnorm/checks.hpp"
#include "invnorm/kernels.hpp"
#include "invnorm/layers.hpp"
#include "invnorm/rng.hpp"
#include "invnorm/tape.hpp"

using namespace invnorm;
namespace k = kernels;

namespace {

// Eager scalar loss: dot(op(x), w) accumulated in double, used as the
// finite-difference reference for the taped ops.
double fd_loss(const std::function<Tensor(const Tensor&)>& op, const Tensor& x, const Tensor& w) {
    return k::dot(op(x), w);
}

// Backward gradient of dot(build(x), w) with respect to x through the tape.
Tensor tape_input_grad(const std::function<Var(Tape&, Var)>& build, const Tensor& x,
                       const Tensor& w) {
    Tape t;
    Var xv = t.input(x, /*requires_grad=*/true);
    Var y = build(t, xv);
    Var loss = t_dot_const(t, y, w);
    t.backward(loss);
    return Tensor::from_data_unchecked(x.shape(), t.grad(xv));
}

void check_close(const Tensor& a, const Tensor& b, double rel_tol, double abs_floor) {
    REQUIRE(a.shape() == b.shape());
    double worst = max_rel_error(a, b, abs_floor);
    CHECK_MESSAGE(worst < rel_tol, "worst relative error ", worst);
}

}  // namespace

TEST_CASE("tensor checked construction rejects bad input") {
    CHECK_THROWS_AS(Tensor::from_data({0, 1, 1, 1}, {}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({1, 1, 2, 2}, {1.0f, 2.0f}), ShapeError);
    CHECK_THROWS_AS(
        Tensor::from_data({1, 1, 1, 2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}),
        NumericalError);
    CHECK_THROWS_AS(
        Tensor::from_data({1, 1, 1, 1}, {std::numeric_limits<float>::infinity()}),
        NumericalError);
    Tensor ok = Tensor::from_data({1, 2, 1, 2}, {1, 2, 3, 4});
    CHECK(ok.numel() == 4);
    CHECK(ok.at(0, 1, 0, 1) == 4.0f);
}

TEST_CASE("finite_diff_grad on sum is all ones") {
    Rng rng(7);
    Tensor x = random_uniform({1, 2, 3, 2}, rng, -2.0f, 2.0f);
    Tensor g = finite_diff_grad([](const Tensor& t) { return k::sum_all(t); }, x, 1e-3);
    for (std::size_t i = 0; i < g.numel(); ++i) {
        CHECK(g.data()[i] == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("finite_diff_grad on 0.5*||x||^2 is x") {
    Rng rng(11);
    Tensor x = random_uniform({1, 1, 4, 4}, rng, -8.0f, 8.0f);
    auto fn = [](const Tensor& t) {
        double acc = 0.0;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            acc += 0.5 * static_cast<double>(t.data()[i]) * t.data()[i];
        }
        return acc;
    };
    Tensor g = finite_diff_grad(fn, x, 1e-3);
    for (std::size_t i = 0; i < g.numel(); ++i) {
        CHECK(std::fabs(g.data()[i] - x.data()[i]) < 1e-4);
    }
}

TEST_CASE("finite_diff_grad through actnorm-then-sum matches the chain rule") {
    // y = s*x + b with s = 2: d(sum y)/dx = 2 everywhere.
    Actnorm act = Actnorm::with_params({2.0f}, {0.25f}, "t.act");
    Rng rng(3);
    Tensor x = random_uniform({1, 1, 2, 2}, rng, -1.0f, 1.0f);
    auto fn = [&](const Tensor& t) { return k::sum_all(act.forward(t)); };
    Tensor g = finite_diff_grad(fn, x, 1e-3);
    for (std::size_t i = 0; i < g.numel(); ++i) {
        CHECK(g.data()[i] == doctest::Approx(2.0).epsilon(1e-3));
    }
}

TEST_CASE("finite_diff_grad rejects bad eps and non-finite functions") {
    Tensor x = Tensor::full({1, 1, 1, 1}, 1.0f);
    CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, 0.0), ConfigError);
    CHECK_THROWS_AS(
        finite_diff_grad([](const Tensor&) { return std::nan(""); }, x, 1e-3),
        NumericalError);
}

TEST_CASE("dense_jacobian_logdet: identity map gives 0") {
    Rng rng(5);
    Tensor x = random_uniform({1, 2, 2, 2}, rng, -1.0f, 1.0f);
    double ld = dense_jacobian_logdet([](const Tensor& t) { return t; }, x, 1e-3);
    CHECK(std::fabs(ld) < 1e-6);
}

TEST_CASE("dense_jacobian_logdet: scaling by 3 gives n*ln 3") {
    Rng rng(6);
    Tensor x = random_uniform({1, 1, 2, 1}, rng, -1.0f, 1.0f);
    double ld =
        dense_jacobian_logdet([](const Tensor& t) { return k::scale(t, 3.0f); }, x, 1e-3);
    CHECK(ld == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-4));
}

TEST_CASE("dense_jacobian_logdet: actnorm with s=(2,2) matches the closed form") {
    Actnorm act = Actnorm::with_params({2.0f, 2.0f}, {0.1f, -0.3f}, "t.act");
    Rng rng(8);
    Tensor x = random_uniform({1, 2, 3, 3}, rng, -1.0f, 1.0f);
    auto fn = [&](const Tensor& t) { return act.forward(t); };
    double dense = dense_jacobian_logdet(fn, x, 1e-3);
    const double closed = 3.0 * 3.0 * (std::log(2.0) + std::log(2.0));  // H*W*sum ln|s_c|
    CHECK(dense == doctest::Approx(closed).epsilon(1e-3));
    CHECK(act.logdet(x) == doctest::Approx(closed).epsilon(1e-9));
    CHECK(closed == doctest::Approx(12.476649).epsilon(1e-5));
}

TEST_CASE("dense_jacobian_logdet enforces its preconditions") {
    Tensor big = Tensor::zeros({1, 1, 9, 9});  // 81 > 64
    CHECK_THROWS_AS(dense_jacobian_logdet([](const Tensor& t) { return t; }, big, 1e-3),
                    SizeError);
    Tensor batched = Tensor::zeros({2, 1, 2, 2});
    CHECK_THROWS_AS(dense_jacobian_logdet([](const Tensor& t) { return t; }, batched, 1e-3),
                    SizeError);
    Tensor x = Tensor::full({1, 1, 2, 2}, 0.5f);
    CHECK_THROWS_AS(
        dense_jacobian_logdet([](const Tensor& t) { return k::scale(t, 0.0f); }, x, 1e-3),
        SingularJacobianError);
}

TEST_CASE("backward: sum over a parameter gives all-ones gradient") {
    Param p("p", Tensor::from_data({1, 3, 1, 1}, {1.0f, -2.0f, 0.5f}));
    Tape t;
    Var pv = t.param(p);
    Var loss = t_sum(t, pv);
    t.backward(loss);
    REQUIRE(p.has_grad());
    for (float g : p.grad) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward: bilinear form gives per-channel sums of x") {
    Rng rng(12);
    Tensor x = random_uniform({2, 3, 2, 2}, rng, -2.0f, 2.0f);
    Param s("s", Tensor::full({1, 3, 1, 1}, 1.5f));
    Param b("b", Tensor::zeros({1, 3, 1, 1}));
    Tape t;
    Var xv = t.input(x);
    Var y = t_channel_affine(t, xv, t.param(s), t.param(b));
    Var loss = t_sum(t, y);
    t.backward(loss);
    REQUIRE(s.has_grad());
    for (int c = 0; c < 3; ++c) {
        double expect = 0.0;
        for (int bi = 0; bi < 2; ++bi) {
            for (int h = 0; h < 2; ++h) {
                for (int w = 0; w < 2; ++w) expect += x.at(bi, c, h, w);
            }
        }
        CHECK(s.grad[static_cast<std::size_t>(c)] == doctest::Approx(expect).epsilon(1e-4));
        CHECK(b.grad[static_cast<std::size_t>(c)] == doctest::Approx(8.0).epsilon(1e-4));
    }
}

TEST_CASE("backward accumulates across calls until zeroed") {
    Param p("p", Tensor::full({1, 2, 1, 1}, 0.5f));
    for (int pass = 0; pass < 2; ++pass) {
        Tape t;
        Var loss = t_sum(t, t.param(p));
        t.backward(loss);
    }
    for (float g : p.grad) CHECK(g == doctest::Approx(2.0));
    p.zero_grad();
    CHECK_FALSE(p.has_grad());
}

TEST_CASE("backward rejects non-scalar losses") {
    Param p("p", Tensor::zeros({1, 2, 1, 1}));
    Tape t;
    Var pv = t.param(p);
    CHECK_THROWS_AS(t.backward(pv), ShapeError);
}

TEST_CASE("taped elementwise and reduction ops match finite differences") {
    Rng rng(21);
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
        Shape sh{2, 3, 4, 3};
        Tensor x = random_uniform(sh, rng, -2.0f, 2.0f);
        Tensor other = random_uniform(sh, rng, -2.0f, 2.0f);
        Tensor w = random_uniform(sh, rng, -1.0f, 1.0f);

        struct Case {
            const char* name;
            std::function<Tensor(const Tensor&)> eager;
            std::function<Var(Tape&, Var)> taped;
        };
        const Case cases[] = {
            {"add", [&](const Tensor& t) { return k::add(t, other); },
             [&](Tape& tp, Var v) { return t_add(tp, v, tp.input(other)); }},
            {"sub", [&](const Tensor& t) { return k::sub(other, t); },
             [&](Tape& tp, Var v) { return t_sub(tp, tp.input(other), v); }},
            {"mul", [&](const Tensor& t) { return k::mul(t, other); },
             [&](Tape& tp, Var v) { return t_mul(tp, v, tp.input(other)); }},
            {"scale", [&](const Tensor& t) { return k::scale(t, -1.7f); },
             [&](Tape& tp, Var v) { return t_scale(tp, v, -1.7f); }},
            {"tanh", [&](const Tensor& t) { return k::tanh_act(t); },
             [&](Tape& tp, Var v) { return t_tanh(tp, v); }},
        };
        for (const Case& c : cases) {
            CAPTURE(c.name);
            Tensor fd = finite_diff_grad(
                [&](const Tensor& t) { return fd_loss(c.eager, t, w); }, x, 1e-3);
            Tensor bp = tape_input_grad(c.taped, x, w);
            check_close(bp, fd, 1e-3, 1e-4);
        }
    }
}

TEST_CASE("taped relu matches finite differences away from the kink") {
    Rng rng(22);
    Shape sh{2, 2, 3, 3};
    std::vector<float> xv(sh.numel());
    for (float& v : xv) {
        // keep |x| > 0.05 so the central difference never crosses zero
        double u = rng.uniform(-2.0, 2.0);
        v = static_cast<float>(u >= 0 ? u + 0.05 : u - 0.05);
    }
    Tensor x = Tensor::from_data_unchecked(sh, std::move(xv));
    Tensor w = random_uniform(sh, rng, -1.0f, 1.0f);
    Tensor fd = finite_diff_grad(
        [&](const Tensor& t) { return fd_loss([](const Tensor& u) { return k::relu(u); }, t, w); },
        x, 1e-3);
    Tensor bp = tape_input_grad([](Tape& tp, Var v) { return t_relu(tp, v); }, x, w);
    check_close(bp, fd, 1e-3, 1e-4);
}

TEST_CASE("taped conv3x3 gradients match finite differences") {
    Rng rng(23);
    Shape xs{2, 3, 4, 4};
    Tensor x = random_uniform(xs, rng, -1.0f, 1.0f);
    Param w("w", random_uniform({4, 3, 3, 3}, rng, -0.5f, 0.5f));
    Param b("b", random_uniform({1, 4, 1, 1}, rng, -0.5f, 0.5f));
    Shape os{2, 4, 4, 4};
    Tensor lw = random_uniform(os, rng, -1.0f, 1.0f);

    auto eager = [&](const Tensor& t) { return k::conv3x3(t, w.value, b.value); };
    Tensor fd_x = finite_diff_grad([&](const Tensor& t) { return fd_loss(eager, t, lw); }, x, 1e-2);
    Tape t;
    Var xv = t.input(x, true);
    Var y = t_conv3x3(t, xv, t.param(w), t.param(b));
    t.backward(t_dot_const(t, y, lw));
    check_close(Tensor::from_data_unchecked(xs, t.grad(xv)), fd_x, 1e-3, 1e-4);

    auto loss_of_w = [&](const Tensor& wt) { return k::dot(k::conv3x3(x, wt, b.value), lw); };
    Tensor fd_w = finite_diff_grad(loss_of_w, w.value, 1e-2);
    check_close(w.grad_tensor(), fd_w, 1e-3, 1e-4);

    auto loss_of_b = [&](const Tensor& bt) { return k::dot(k::conv3x3(x, w.value, bt), lw); };
    Tensor fd_b = finite_diff_grad(loss_of_b, b.value, 1e-2);
    check_close(b.grad_tensor(), fd_b, 1e-3, 1e-4);
}

TEST_CASE("taped linear, pooling and softmax ops match finite differences") {
    Rng rng(24);
    Shape xs{3, 5, 1, 1};
    Tensor x = random_uniform(xs, rng, -1.5f, 1.5f);
    Param w("w", random_uniform({4, 5, 1, 1}, rng, -0.7f, 0.7f));
    Param b("b", random_uniform({1, 4, 1, 1}, rng, -0.2f, 0.2f));
    std::vector<int> labels{1, 3, 0};

    auto eager_loss = [&](const Tensor& t) {
        Tensor logits = k::linear(t, w.value, b.value);
        return k::softmax_cross_entropy(logits, labels).loss;
    };
    Tensor fd_x = finite_diff_grad(eager_loss, x, 1e-3);

    Tape t;
    Var xv = t.input(x, true);
    Var logits = t_linear(t, xv, t.param(w), t.param(b));
    Var loss = t_softmax_cross_entropy(t, logits, labels);
    t.backward(loss);
    check_close(Tensor::from_data_unchecked(xs, t.grad(xv)), fd_x, 2e-3, 1e-4);

    auto loss_of_w = [&](const Tensor& wt) {
        return k::softmax_cross_entropy(k::linear(x, wt, b.value), labels).loss;
    };
    check_close(w.grad_tensor(), finite_diff_grad(loss_of_w, w.value, 1e-3), 2e-3, 1e-4);

    // pooling ops
    Shape ps{2, 2, 4, 6};
    Tensor px = random_uniform(ps, rng, -2.0f, 2.0f);
    Tensor pw = random_uniform({2, 2, 2, 3}, rng, -1.0f, 1.0f);
    Tensor fd_p = finite_diff_grad(
        [&](const Tensor& t) {
            return fd_loss([](const Tensor& u) { return k::avgpool2(u); }, t, pw);
        },
        px, 1e-3);
    Tensor bp_p = tape_input_grad([](Tape& tp, Var v) { return t_avgpool2(tp, v); }, px, pw);
    check_close(bp_p, fd_p, 1e-3, 1e-4);

    Tensor gw = random_uniform({2, 2, 1, 1}, rng, -1.0f, 1.0f);
    Tensor fd_g = finite_diff_grad(
        [&](const Tensor& t) {
            return fd_loss([](const Tensor& u) { return k::global_avg_pool(u); }, t, gw);
        },
        px, 1e-3);
    Tensor bp_g =
        tape_input_grad([](Tape& tp, Var v) { return t_global_avg_pool(tp, v); }, px, gw);
    check_close(bp_g, fd_g, 1e-3, 1e-4);
}

TEST_CASE("taped slice/concat/squeeze round out the op set") {
    Rng rng(25);
    Shape sh{2, 4, 3, 5};
    Tensor x = random_uniform(sh, rng, -2.0f, 2.0f);
    Tensor w1 = random_uniform({2, 2, 3, 5}, rng, -1.0f, 1.0f);
    Tensor fd_s = finite_diff_grad(
        [&](const Tensor& t) {
            return fd_loss([](const Tensor& u) { return k::slice_channels(u, 1, 3); }, t, w1);
        },
        x, 1e-3);
    Tensor bp_s =
        tape_input_grad([](Tape& tp, Var v) { return t_slice_channels(tp, v, 1, 3); }, x, w1);
    check_close(bp_s, fd_s, 1e-3, 1e-4);

    auto [sq, rec] = squeeze_forward(x);
    Tensor w2 = random_uniform(sq.shape(), rng, -1.0f, 1.0f);
    Tensor fd_q = finite_diff_grad(
        [&](const Tensor& t) {
            return fd_loss([](const Tensor& u) { return squeeze_forward(u).first; }, t, w2);
        },
        x, 1e-3);
    Tensor bp_q =
        tape_input_grad([](Tape& tp, Var v) { return t_squeeze(tp, v).first; }, x, w2);
    check_close(bp_q, fd_q, 1e-3, 1e-4);

    Tensor w3 = random_uniform(sh, rng, -1.0f, 1.0f);
    Tensor fd_u = finite_diff_grad(
        [&](const Tensor& t) {
            return fd_loss([&](const Tensor& u) { return squeeze_inverse(u, rec); }, t, w3);
        },
        sq, 1e-3);
    Tensor bp_u =
        tape_input_grad([&](Tape& tp, Var v) { return t_unsqueeze(tp, v, rec); }, sq, w3);
    check_close(bp_u, fd_u, 1e-3, 1e-4);
}

TEST_CASE("taped instance norm gradients match finite differences") {
    Rng rng(26);
    Shape sh{2, 3, 4, 4};
    Tensor x = random_uniform(sh, rng, -2.0f, 2.0f);
    Param gamma("g", random_uniform({1, 3, 1, 1}, rng, 0.5f, 1.5f));
    Param beta("b", random_uniform({1, 3, 1, 1}, rng, -0.5f, 0.5f));
    Tensor w = random_uniform(sh, rng, -1.0f, 1.0f);
    const float eps = 1e-5f;

    auto eager = [&](const Tensor& t) {
        return k::instance_norm(t, gamma.value.vec(), beta.value.vec(), eps).first;
    };
    Tensor fd_x = finite_diff_grad([&](const Tensor& t) { return fd_loss(eager, t, w); }, x, 1e-2);

    Tape t;
    Var xv = t.input(x, true);
    Var y = t_instance_norm(t, xv, t.param(gamma), t.param(beta), eps);
    t.backward(t_dot_const(t, y, w));
    check_close(Tensor::from_data_unchecked(sh, t.grad(xv)), fd_x, 2e-3, 1e-4);

    auto loss_of_g = [&](const Tensor& gt) {
        return k::dot(k::instance_norm(x, gt.vec(), beta.value.vec(), eps).first, w);
    };
    check_close(gamma.grad_tensor(), finite_diff_grad(loss_of_g, gamma.value, 1e-3), 1e-3, 1e-4);
    auto loss_of_b = [&](const Tensor& bt) {
        return k::dot(k::instance_norm(x, gamma.value.vec(), bt.vec(), eps).first, w);
    };
    check_close(beta.grad_tensor(), finite_diff_grad(loss_of_b, beta.value, 1e-3), 1e-3, 1e-4);
}

TEST_CASE("compare_logdet produces a consistent report") {
    Actnorm act = Actnorm::with_params({0.5f, 3.0f}, {0.0f, 0.0f}, "t.act");
    Rng rng(31);
    Tensor x = random_uniform({1, 2, 2, 2}, rng, -1.0f, 1.0f);
    JacobianReport rep =
        compare_logdet([&](const Tensor& t) { return act.forward(t); }, act.logdet(x), x, 1e-3);
    CHECK(rep.abs_err < 1e-2);
    CHECK(rep.abs_err >= 0.0);
    CHECK(rep.input_shape == x.shape());
    CHECK(rep.layer_logdet ==
          doctest::Approx(4.0 * (std::log(0.5) + std::log(3.0))).epsilon(1e-6));
}
