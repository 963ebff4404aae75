// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>

#include "fastdiff/ops.hpp"
#include "fastdiff/tensor.hpp"

namespace fastdiff {

template <class T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
template <class T>
struct Var {
    Graph<T>* graph = nullptr;
    std::uint32_t id = 0;

    const BasicTensor<T>& value() const { return graph->value(*this); }
    const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
/// tape backwards is a valid reverse-topological order.
///
/// A graph built with `record_gradients = false` keeps values only; use it
/// for inference.
template <class T>
class Graph {
public:
    using TensorT = BasicTensor<T>;
    /// Receives the node's gradient, which it may consume (move from).
    using BackwardFn = std::function<void(Graph&, TensorT& grad_out)>;

    explicit Graph(bool record_gradients = true) : record_(record_gradients) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return record_; }

    /// Leaf that never receives a gradient.
    Var<T> constant(TensorT value);

    /// Leaf whose gradient is kept after backward().
    Var<T> variable(TensorT value);

    /// Like variable(), but refers to an external tensor without copying it.
    /// The tensor must outlive the graph.
    Var<T> parameter(const TensorT& external);

    const TensorT& value(Var<T> v) const;

    /// Gradient of the last backward() loss; zeros for unreached leaves.
    const TensorT& grad(Var<T> v) const;

    bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf. Intermediate
    /// gradients are released as soon as they are consumed.
    void backward(Var<T> loss);

    std::size_t size() const noexcept { return nodes_.size(); }

    // Building blocks for operations.
    Var<T> record(TensorT value, std::initializer_list<Var<T>> parents, BackwardFn fn);
    void accumulate(Var<T> target, const TensorT& g);
    void accumulate(Var<T> target, TensorT&& g);

private:
    struct Node {
        TensorT owned;
        const TensorT* external = nullptr;
        TensorT grad;
        bool requires_grad = false;
        bool has_grad = false;
        bool leaf = false;
        BackwardFn backward;

        const TensorT& value() const { return external ? *external : owned; }
    };

    Var<T> push(Node node);

    // deque keeps node addresses stable while the tape grows
    std::deque<Node> nodes_;
    bool record_;
};

namespace ad {

template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> scale(Var<T> a, double s);
template <class T> Var<T> matmul(Var<T> a, Var<T> b);
template <class T> Var<T> conv2d(Var<T> x, Var<T> w, Conv2dParams p = {});
/// Convolution followed by a bias of shape [F] or [N,F].
template <class T> Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, Conv2dParams p = {});
template <class T> Var<T> add_bias(Var<T> x, Var<T> bias);
template <class T> Var<T> silu(Var<T> x);
template <class T> Var<T> upsample_nearest2x(Var<T> x);
template <class T> Var<T> avgpool2x(Var<T> x);
template <class T> Var<T> concat_channels(Var<T> a, Var<T> b);
/// Scalar mean of squared differences.
template <class T> Var<T> mse_loss(Var<T> pred, Var<T> target);
/// Scalar sum of all elements.
template <class T> Var<T> sum(Var<T> a);

}  // namespace ad

template <class T> Var<T> operator+(Var<T> a, Var<T> b) { return ad::add(a, b); }
template <class T> Var<T> operator-(Var<T> a, Var<T> b) { return ad::sub(a, b); }
template <class T> Var<T> operator*(Var<T> a, Var<T> b) { return ad::mul(a, b); }
template <class T> Var<T> operator*(double s, Var<T> a) { return ad::scale(a, s); }
template <class T> Var<T> operator*(Var<T> a, double s) { return ad::scale(a, s); }

}  // namespace fastdiff
