// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/tape.hpp"

#include <cmath>

#include "invnorm/kernels.hpp"

namespace invnorm {

namespace k = kernels;

Var Tape::input(Tensor x, bool requires_grad) {
    Node n;
    n.value = std::move(x);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Tensor value, const std::vector<Var>& parents,
               std::function<void(Tape&, const Node&)> backward) {
    Node n;
    n.value = std::move(value);
    n.backward = std::move(backward);
    for (Var p : parents) {
        if (node(p).requires_grad) {
            n.requires_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::add_grad(Var v, const float* g, std::size_t n) {
    Node& nd = node(v);
    if (n != nd.value.numel()) {
        throw ShapeError("tape: gradient size mismatch");
    }
    if (nd.grad.empty()) nd.grad.assign(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) nd.grad[i] += g[i];
}

void Tape::backward(Var loss) {
    if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size()) {
        throw StateError("backward: invalid loss node");
    }
    Node& ln = node(loss);
    if (ln.value.numel() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + ln.value.shape().str());
    }
    if (ln.grad.empty()) ln.grad.assign(1, 0.0f);
    ln.grad[0] += 1.0f;
    for (int i = loss.id; i >= 0; --i) {
        Node& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.grad.empty() || !nd.requires_grad) continue;
        if (nd.param != nullptr) {
            nd.param->accumulate_grad(nd.grad.data(), nd.grad.size());
        } else if (nd.backward) {
            nd.backward(*this, nd);
        }
    }
    // Keep leaf gradients readable, drop the intermediates' working buffers.
    for (int i = loss.id; i >= 0; --i) {
        Node& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.backward && !nd.grad.empty()) {
            nd.grad.clear();
            nd.grad.shrink_to_fit();
        }
    }
}

namespace {

Tensor grad_tensor(const Tape::Node& n) {
    return Tensor::from_data_unchecked(n.value.shape(), n.grad);
}

}  // namespace

Var t_add(Tape& t, Var a, Var b) {
    Tensor out = k::add(t.value(a), t.value(b));
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tape::Node& n) {
        tp.add_grad(a, n.grad.data(), n.grad.size());
        tp.add_grad(b, n.grad.data(), n.grad.size());
    });
}

Var t_sub(Tape& t, Var a, Var b) {
    Tensor out = k::sub(t.value(a), t.value(b));
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tape::Node& n) {
        tp.add_grad(a, n.grad.data(), n.grad.size());
        Tensor gb = k::scale(grad_tensor(n), -1.0f);
        tp.add_grad(b, gb);
    });
}

Var t_mul(Tape& t, Var a, Var b) {
    Tensor va = t.value(a);
    Tensor vb = t.value(b);
    Tensor out = k::mul(va, vb);
    return t.push(std::move(out), {a, b}, [a, b, va, vb](Tape& tp, const Tape::Node& n) {
        Tensor g = grad_tensor(n);
        tp.add_grad(a, k::mul(g, vb));
        tp.add_grad(b, k::mul(g, va));
    });
}

Var t_scale(Tape& t, Var a, float kf) {
    Tensor out = k::scale(t.value(a), kf);
    return t.push(std::move(out), {a}, [a, kf](Tape& tp, const Tape::Node& n) {
        tp.add_grad(a, k::scale(grad_tensor(n), kf));
    });
}

Var t_relu(Tape& t, Var x) {
    Tensor vx = t.value(x);
    Tensor out = k::relu(vx);
    return t.push(std::move(out), {x}, [x, vx](Tape& tp, const Tape::Node& n) {
        tp.add_grad(x, k::relu_back(vx, grad_tensor(n)));
    });
}

Var t_tanh(Tape& t, Var x) {
    Tensor out = k::tanh_act(t.value(x));
    Tensor saved = out;
    return t.push(std::move(out), {x}, [x, saved](Tape& tp, const Tape::Node& n) {
        tp.add_grad(x, k::tanh_back(saved, grad_tensor(n)));
    });
}

Var t_sum(Tape& t, Var x) {
    double s = k::sum_all(t.value(x));
    Shape xs = t.shape(x);
    Tensor out = Tensor::from_data_unchecked({1, 1, 1, 1}, {static_cast<float>(s)});
    return t.push(std::move(out), {x}, [x, xs](Tape& tp, const Tape::Node& n) {
        Tensor g = Tensor::full(xs, n.grad[0]);
        tp.add_grad(x, g);
    });
}

Var t_dot_const(Tape& t, Var x, Tensor w) {
    double s = k::dot(t.value(x), w);
    Tensor out = Tensor::from_data_unchecked({1, 1, 1, 1}, {static_cast<float>(s)});
    return t.push(std::move(out), {x}, [x, w](Tape& tp, const Tape::Node& n) {
        tp.add_grad(x, k::scale(w, n.grad[0]));
    });
}

Var t_channel_affine(Tape& t, Var x, Var s, Var b) {
    Tensor vx = t.value(x);
    const std::vector<float>& sv = t.value(s).vec();
    const std::vector<float>& bv = t.value(b).vec();
    Tensor out = k::channel_affine(vx, sv, bv);
    Tensor vs = t.value(s);
    return t.push(std::move(out), {x, s, b}, [x, s, b, vx, vs](Tape& tp, const Tape::Node& n) {
        const Shape& sh = vx.shape();
        const std::size_t hw = sh.spatial();
        const float* g = n.grad.data();
        const float* px = vx.data();
        std::vector<float> ds(sh.c, 0.0f), db(sh.c, 0.0f), gx(n.grad.size());
        std::size_t i = 0;
        for (int bi = 0; bi < sh.b; ++bi) {
            for (int ci = 0; ci < sh.c; ++ci) {
                const float sc = vs.data()[ci];
                double accs = 0.0, accb = 0.0;
                for (std::size_t kk = 0; kk < hw; ++kk, ++i) {
                    accs += static_cast<double>(g[i]) * px[i];
                    accb += g[i];
                    gx[i] = g[i] * sc;
                }
                ds[ci] += static_cast<float>(accs);
                db[ci] += static_cast<float>(accb);
            }
        }
        tp.add_grad(x, gx.data(), gx.size());
        tp.add_grad(s, ds.data(), ds.size());
        tp.add_grad(b, db.data(), db.size());
    });
}

Var t_channel_affine_inv(Tape& t, Var y, Var s, Var b) {
    Tensor vy = t.value(y);
    const std::vector<float>& sv = t.value(s).vec();
    const std::vector<float>& bv = t.value(b).vec();
    Tensor out = k::channel_affine_inv(vy, sv, bv);
    Tensor vout = out;
    Tensor vs = t.value(s);
    return t.push(std::move(out), {y, s, b}, [y, s, b, vout, vs](Tape& tp, const Tape::Node& n) {
        // x = (y - b)/s: dy = g/s, db = -sum g/s, ds = -sum g*x/s
        const Shape& sh = vout.shape();
        const std::size_t hw = sh.spatial();
        const float* g = n.grad.data();
        const float* px = vout.data();
        std::vector<float> ds(sh.c, 0.0f), db(sh.c, 0.0f), gy(n.grad.size());
        std::size_t i = 0;
        for (int bi = 0; bi < sh.b; ++bi) {
            for (int ci = 0; ci < sh.c; ++ci) {
                const float inv = 1.0f / vs.data()[ci];
                double accs = 0.0, accb = 0.0;
                for (std::size_t kk = 0; kk < hw; ++kk, ++i) {
                    const float gi = g[i] * inv;
                    gy[i] = gi;
                    accb -= gi;
                    accs -= static_cast<double>(gi) * px[i];
                }
                ds[ci] += static_cast<float>(accs);
                db[ci] += static_cast<float>(accb);
            }
        }
        tp.add_grad(y, gy.data(), gy.size());
        tp.add_grad(s, ds.data(), ds.size());
        tp.add_grad(b, db.data(), db.size());
    });
}

Var t_conv3x3(Tape& t, Var x, Var w, Var b) {
    Tensor vx = t.value(x);
    Tensor vw = t.value(w);
    Tensor out = k::conv3x3(vx, vw, t.value(b));
    return t.push(std::move(out), {x, w, b}, [x, w, b, vx, vw](Tape& tp, const Tape::Node& n) {
        Tensor g = grad_tensor(n);
        tp.add_grad(x, k::conv3x3_dx(g, vw, vx.shape()));
        tp.add_grad(w, k::conv3x3_dw(vx, g, vw.shape()));
        std::vector<float> db = k::conv3x3_db(g);
        tp.add_grad(b, db.data(), db.size());
    });
}

Var t_linear(Tape& t, Var x, Var w, Var b) {
    Tensor vx = t.value(x);
    Tensor vw = t.value(w);
    Tensor out = k::linear(vx, vw, t.value(b));
    return t.push(std::move(out), {x, w, b}, [x, w, b, vx, vw](Tape& tp, const Tape::Node& n) {
        Tensor g = grad_tensor(n);
        tp.add_grad(x, k::linear_dx(g, vw, vx.shape()));
        tp.add_grad(w, k::linear_dw(vx, g, vw.shape()));
        std::vector<float> db = k::linear_db(g);
        tp.add_grad(b, db.data(), db.size());
    });
}

Var t_avgpool2(Tape& t, Var x) {
    Tensor vx = t.value(x);
    Shape xs = vx.shape();
    Tensor out = k::avgpool2(vx);
    return t.push(std::move(out), {x}, [x, xs](Tape& tp, const Tape::Node& n) {
        tp.add_grad(x, k::avgpool2_back(grad_tensor(n), xs));
    });
}

Var t_global_avg_pool(Tape& t, Var x) {
    Shape xs = t.shape(x);
    Tensor out = k::global_avg_pool(t.value(x));
    return t.push(std::move(out), {x}, [x, xs](Tape& tp, const Tape::Node& n) {
        tp.add_grad(x, k::global_avg_pool_back(grad_tensor(n), xs));
    });
}

Var t_instance_norm(Tape& t, Var x, Var gamma, Var beta, float eps) {
    Tensor vx = t.value(x);
    Tensor vg = t.value(gamma);
    auto [out, stats] = k::instance_norm(vx, vg.vec(), t.value(beta).vec(), eps);
    auto st = std::make_shared<k::InstStats>(std::move(stats));
    return t.push(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, vx, vg, st, eps](Tape& tp, const Tape::Node& n) {
                      k::InstGrads gr = k::instance_norm_back(vx, grad_tensor(n), *st, vg.vec(), eps);
                      tp.add_grad(x, gr.gx);
                      tp.add_grad(gamma, gr.dgamma.data(), gr.dgamma.size());
                      tp.add_grad(beta, gr.dbeta.data(), gr.dbeta.size());
                  });
}

Var t_softmax_cross_entropy(Tape& t, Var logits, std::vector<int> labels) {
    k::SoftmaxCe ce = k::softmax_cross_entropy(t.value(logits), labels);
    Tensor out = Tensor::from_data_unchecked({1, 1, 1, 1}, {static_cast<float>(ce.loss)});
    Tensor probs = ce.probs;
    return t.push(std::move(out), {logits},
                  [logits, probs, labels = std::move(labels)](Tape& tp, const Tape::Node& n) {
                      tp.add_grad(logits, k::softmax_cross_entropy_back(probs, labels, n.grad[0]));
                  });
}

Var t_slice_channels(Tape& t, Var x, int c0, int c1) {
    Shape xs = t.shape(x);
    Tensor out = k::slice_channels(t.value(x), c0, c1);
    return t.push(std::move(out), {x}, [x, xs, c0](Tape& tp, const Tape::Node& n) {
        std::vector<float> gx(xs.numel(), 0.0f);
        const std::size_t hw = xs.spatial();
        const int cs = static_cast<int>(n.value.shape().c);
        for (int bi = 0; bi < xs.b; ++bi) {
            const float* src = n.grad.data() + static_cast<std::size_t>(bi) * cs * hw;
            float* dst = gx.data() + (static_cast<std::size_t>(bi) * xs.c + c0) * hw;
            std::copy(src, src + static_cast<std::size_t>(cs) * hw, dst);
        }
        tp.add_grad(x, gx.data(), gx.size());
    });
}

Var t_concat_channels(Tape& t, Var a, Var b) {
    Shape sa = t.shape(a);
    Shape sb = t.shape(b);
    Tensor out = k::concat_channels(t.value(a), t.value(b));
    return t.push(std::move(out), {a, b}, [a, b, sa, sb](Tape& tp, const Tape::Node& n) {
        Tensor g = grad_tensor(n);
        tp.add_grad(a, k::slice_channels(g, 0, sa.c));
        tp.add_grad(b, k::slice_channels(g, sa.c, sa.c + sb.c));
    });
}

std::pair<Var, SqueezeRecord> t_squeeze(Tape& t, Var x) {
    auto [out, rec] = squeeze_forward(t.value(x));
    Var v = t.push(std::move(out), {x}, [x, rec](Tape& tp, const Tape::Node& n) {
        tp.add_grad(x, squeeze_inverse(grad_tensor(n), rec));
    });
    return {v, rec};
}

Var t_unsqueeze(Tape& t, Var y, const SqueezeRecord& rec) {
    Tensor out = squeeze_inverse(t.value(y), rec);
    return t.push(std::move(out), {y}, [y](Tape& tp, const Tape::Node& n) {
        tp.add_grad(y, squeeze_forward(grad_tensor(n)).first);
    });
}

}  // namespace invnorm
