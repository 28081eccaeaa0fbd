// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "invnorm/param.hpp"
#include "invnorm/squeeze.hpp"
#include "invnorm/tensor.hpp"

namespace invnorm {

class Tape;

// Handle to a tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over recorded tensor operations. Nodes are appended
// in execution order, so reverse node order is a topological order for the
// backward sweep. Backward accumulates into Param::grad additively; call
// Param::zero_grad between steps. A tape is single-threaded; parameters it
// references must outlive it.
class Tape {
public:
    struct Node {
        Tensor value;
        std::vector<float> grad;  // empty until touched by the sweep
        std::function<void(Tape&, const Node&)> backward;  // null for leaves
        Param* param = nullptr;
        bool requires_grad = false;
    };

    // Leaf holding a plain tensor. With requires_grad the input's gradient is
    // kept readable after backward (used by gradient checks).
    Var input(Tensor x, bool requires_grad = false);
    // Leaf bound to a parameter; backward adds the node gradient to p.grad.
    Var param(Param& p);

    // Generic op insertion; `backward` reads node.grad and pushes gradient
    // into the node's parents (captured in the closure) via add_grad.
    Var push(Tensor value, const std::vector<Var>& parents,
             std::function<void(Tape&, const Node&)> backward);

    const Tensor& value(Var v) const { return node(v).value; }
    const Shape& shape(Var v) const { return node(v).value.shape(); }
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    // Gradient of the last backward() with respect to node v; empty when the
    // sweep never reached it.
    const std::vector<float>& grad(Var v) const { return node(v).grad; }

    void add_grad(Var v, const float* g, std::size_t n);
    void add_grad(Var v, const Tensor& g) { add_grad(v, g.data(), g.numel()); }

    // Reverse sweep from a scalar loss node.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }

    std::vector<Node> nodes_;
};

// --- Recorded ops. Values match the eager kernels exactly. ---

Var t_add(Tape& t, Var a, Var b);
Var t_sub(Tape& t, Var a, Var b);
Var t_mul(Tape& t, Var a, Var b);
Var t_scale(Tape& t, Var a, float k);
Var t_relu(Tape& t, Var x);
Var t_tanh(Tape& t, Var x);
// Scalar (1,1,1,1) sum of all elements.
Var t_sum(Tape& t, Var x);
// Scalar dot product with a fixed weight tensor.
Var t_dot_const(Tape& t, Var x, Tensor w);

// Per-channel affine and its inverse; s and b are (1,C,1,1) leaves.
Var t_channel_affine(Tape& t, Var x, Var s, Var b);
Var t_channel_affine_inv(Tape& t, Var y, Var s, Var b);

Var t_conv3x3(Tape& t, Var x, Var w, Var b);
Var t_linear(Tape& t, Var x, Var w, Var b);
Var t_avgpool2(Tape& t, Var x);
Var t_global_avg_pool(Tape& t, Var x);

Var t_instance_norm(Tape& t, Var x, Var gamma, Var beta, float eps);
Var t_softmax_cross_entropy(Tape& t, Var logits, std::vector<int> labels);

Var t_slice_channels(Tape& t, Var x, int c0, int c1);
Var t_concat_channels(Tape& t, Var a, Var b);

std::pair<Var, SqueezeRecord> t_squeeze(Tape& t, Var x);
Var t_unsqueeze(Tape& t, Var y, const SqueezeRecord& rec);

}  // namespace invnorm
