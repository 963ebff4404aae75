// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/autodiff.hpp"

#include <algorithm>

namespace fastdiff {

template <class T>
Var<T> Graph<T>::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::constant(TensorT value) {
    Node n;
    n.owned = std::move(value);
    n.leaf = true;
    return push(std::move(n));
}

template <class T>
Var<T> Graph<T>::variable(TensorT value) {
    Node n;
    n.owned = std::move(value);
    n.leaf = true;
    n.requires_grad = record_;
    return push(std::move(n));
}

template <class T>
Var<T> Graph<T>::parameter(const TensorT& external) {
    Node n;
    n.external = &external;
    n.leaf = true;
    n.requires_grad = record_;
    return push(std::move(n));
}

template <class T>
const typename Graph<T>::TensorT& Graph<T>::value(Var<T> v) const {
    return nodes_.at(v.id).value();
}

template <class T>
const typename Graph<T>::TensorT& Graph<T>::grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id);
    if (!n.requires_grad) {
        throw std::logic_error("grad() on a node that does not require gradients");
    }
    if (!n.has_grad) {
        throw std::logic_error("grad() before backward()");
    }
    return n.grad;
}

template <class T>
Var<T> Graph<T>::record(TensorT value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
    Node n;
    n.owned = std::move(value);
    if (record_) {
        n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                      [this](Var<T> p) { return nodes_[p.id].requires_grad; });
        if (n.requires_grad) {
            n.backward = std::move(fn);
        }
    }
    return push(std::move(n));
}

template <class T>
void Graph<T>::accumulate(Var<T> target, const TensorT& g) {
    accumulate(target, TensorT(g));
}

template <class T>
void Graph<T>::accumulate(Var<T> target, TensorT&& g) {
    Node& n = nodes_[target.id];
    if (!n.requires_grad) {
        return;
    }
    if (g.shape() != n.value().shape()) {
        throw ShapeError("gradient shape " + shape_to_string(g.shape()) + " does not match value " +
                         shape_to_string(n.value().shape()));
    }
    if (!n.has_grad) {
        n.grad = std::move(g);
        n.has_grad = true;
    } else {
        add_inplace(n.grad, g);
    }
}

template <class T>
void Graph<T>::backward(Var<T> loss) {
    Node& root = nodes_.at(loss.id);
    if (root.value().size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_to_string(root.value().shape()));
    }
    if (!root.requires_grad) {
        throw std::logic_error("backward: loss does not depend on any variable");
    }
    for (auto& n : nodes_) {
        n.has_grad = n.leaf && n.requires_grad;
        n.grad = n.has_grad ? TensorT(n.value().shape()) : TensorT();
    }
    root.grad = TensorT(root.value().shape(), T(1));
    root.has_grad = true;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || !n.has_grad) {
            continue;
        }
        n.backward(*this, n.grad);
        n.grad = TensorT();
        n.has_grad = false;
    }
}

template class Graph<float>;
template class Graph<double>;

namespace ad {

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    auto& g = *a.graph;
    return g.record(fastdiff::add(a.value(), b.value()), {a, b}, [a, b](Graph<T>& g, BasicTensor<T>& gy) {
        g.accumulate(a, gy);
        g.accumulate(b, std::move(gy));
    });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
    auto& g = *a.graph;
    return g.record(fastdiff::sub(a.value(), b.value()), {a, b}, [a, b](Graph<T>& g, BasicTensor<T>& gy) {
        g.accumulate(b, fastdiff::scale(gy, -1.0));
        g.accumulate(a, std::move(gy));
    });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    auto& g = *a.graph;
    return g.record(fastdiff::mul(a.value(), b.value()), {a, b}, [a, b](Graph<T>& g, BasicTensor<T>& gy) {
        if (g.requires_grad(a)) {
            g.accumulate(a, fastdiff::mul(gy, b.value()));
        }
        if (g.requires_grad(b)) {
            g.accumulate(b, fastdiff::mul(gy, a.value()));
        }
    });
}

template <class T>
Var<T> scale(Var<T> a, double s) {
    auto& g = *a.graph;
    return g.record(fastdiff::scale(a.value(), s), {a},
                    [a, s](Graph<T>& g, BasicTensor<T>& gy) { g.accumulate(a, fastdiff::scale(gy, s)); });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    auto& g = *a.graph;
    return g.record(fastdiff::matmul(a.value(), b.value()), {a, b}, [a, b](Graph<T>& g, BasicTensor<T>& gy) {
        if (g.requires_grad(a)) {
            g.accumulate(a, fastdiff::matmul(gy, b.value(), false, true));
        }
        if (g.requires_grad(b)) {
            g.accumulate(b, fastdiff::matmul(a.value(), gy, true, false));
        }
    });
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Conv2dParams p) {
    auto& g = *x.graph;
    return g.record(fastdiff::conv2d(x.value(), w.value(), p), {x, w},
                    [x, w, p](Graph<T>& g, BasicTensor<T>& gy) {
                        if (g.requires_grad(x)) {
                            g.accumulate(x, conv2d_grad_input(gy, w.value(), x.shape(), p));
                        }
                        if (g.requires_grad(w)) {
                            g.accumulate(w, conv2d_grad_weight(gy, x.value(), w.shape(), p));
                        }
                    });
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, Conv2dParams p) {
    auto& g = *x.graph;
    auto y = fastdiff::conv2d(x.value(), w.value(), p);
    add_bias_inplace(y, bias.value());
    return g.record(std::move(y), {x, w, bias}, [x, w, bias, p](Graph<T>& g, BasicTensor<T>& gy) {
        if (g.requires_grad(bias)) {
            g.accumulate(bias, bias_grad(gy, bias.shape()));
        }
        if (g.requires_grad(x)) {
            g.accumulate(x, conv2d_grad_input(gy, w.value(), x.shape(), p));
        }
        if (g.requires_grad(w)) {
            g.accumulate(w, conv2d_grad_weight(gy, x.value(), w.shape(), p));
        }
    });
}

template <class T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
    auto& g = *x.graph;
    return g.record(fastdiff::add_bias(x.value(), bias.value()), {x, bias},
                    [x, bias](Graph<T>& g, BasicTensor<T>& gy) {
                        if (g.requires_grad(bias)) {
                            g.accumulate(bias, bias_grad(gy, bias.shape()));
                        }
                        g.accumulate(x, std::move(gy));
                    });
}

template <class T>
Var<T> silu(Var<T> x) {
    auto& g = *x.graph;
    return g.record(fastdiff::silu(x.value()), {x}, [x](Graph<T>& g, BasicTensor<T>& gy) {
        g.accumulate(x, silu_grad(x.value(), gy));
    });
}

template <class T>
Var<T> upsample_nearest2x(Var<T> x) {
    auto& g = *x.graph;
    // The adjoint of nearest upsampling sums each 2x2 block: 4 * avgpool.
    return g.record(fastdiff::upsample_nearest2x(x.value()), {x}, [x](Graph<T>& g, BasicTensor<T>& gy) {
        g.accumulate(x, fastdiff::scale(fastdiff::avgpool2x(gy), 4.0));
    });
}

template <class T>
Var<T> avgpool2x(Var<T> x) {
    auto& g = *x.graph;
    return g.record(fastdiff::avgpool2x(x.value()), {x}, [x](Graph<T>& g, BasicTensor<T>& gy) {
        g.accumulate(x, fastdiff::scale(fastdiff::upsample_nearest2x(gy), 0.25));
    });
}

template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
    auto& g = *a.graph;
    return g.record(fastdiff::concat_channels(a.value(), b.value()), {a, b},
                    [a, b](Graph<T>& g, BasicTensor<T>& gy) {
                        const std::size_t ca = a.shape()[1];
                        if (g.requires_grad(a)) {
                            g.accumulate(a, slice_channels(gy, 0, ca));
                        }
                        if (g.requires_grad(b)) {
                            g.accumulate(b, slice_channels(gy, ca, b.shape()[1]));
                        }
                    });
}

template <class T>
Var<T> mse_loss(Var<T> pred, Var<T> target) {
    auto& g = *pred.graph;
    const double loss = fastdiff::mse_loss(pred.value(), target.value());
    return g.record(BasicTensor<T>::scalar(static_cast<T>(loss)), {pred, target},
                    [pred, target](Graph<T>& g, BasicTensor<T>& gy) {
                        const double k = 2.0 * static_cast<double>(gy[0]) / static_cast<double>(pred.value().size());
                        auto diff = fastdiff::sub(pred.value(), target.value());
                        if (g.requires_grad(target)) {
                            g.accumulate(target, fastdiff::scale(diff, -k));
                        }
                        g.accumulate(pred, fastdiff::scale(diff, k));
                    });
}

template <class T>
Var<T> sum(Var<T> a) {
    auto& g = *a.graph;
    return g.record(BasicTensor<T>::scalar(static_cast<T>(fastdiff::sum(a.value()))), {a},
                    [a](Graph<T>& g, BasicTensor<T>& gy) {
                        g.accumulate(a, BasicTensor<T>(a.shape(), gy[0]));
                    });
}

#define FASTDIFF_INSTANTIATE_AD(T)                                 \
    template Var<T> add(Var<T>, Var<T>);                           \
    template Var<T> sub(Var<T>, Var<T>);                           \
    template Var<T> mul(Var<T>, Var<T>);                           \
    template Var<T> scale(Var<T>, double);                         \
    template Var<T> matmul(Var<T>, Var<T>);                        \
    template Var<T> conv2d(Var<T>, Var<T>, Conv2dParams);          \
    template Var<T> conv2d(Var<T>, Var<T>, Var<T>, Conv2dParams);  \
    template Var<T> add_bias(Var<T>, Var<T>);                      \
    template Var<T> silu(Var<T>);                                  \
    template Var<T> upsample_nearest2x(Var<T>);                    \
    template Var<T> avgpool2x(Var<T>);                             \
    template Var<T> concat_channels(Var<T>, Var<T>);               \
    template Var<T> mse_loss(Var<T>, Var<T>);                      \
    template Var<T> sum(Var<T>);

FASTDIFF_INSTANTIATE_AD(float)
FASTDIFF_INSTANTIATE_AD(double)

}  // namespace ad

}  // namespace fastdiff
