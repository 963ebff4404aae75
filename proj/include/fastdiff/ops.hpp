// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

// Pure tensor kernels. Every function returns a fresh tensor and leaves its
// inputs untouched; the autodiff layer composes these for forward and
// backward passes.

#pragma once

#include <cstddef>

#include "fastdiff/tensor.hpp"

namespace fastdiff {

struct Conv2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

template <class T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> scale(const BasicTensor<T>& a, double s);
template <class T> BasicTensor<T> add_scalar(const BasicTensor<T>& a, double s);

/// a += b in place; used for gradient accumulation.
template <class T> void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T> double sum(const BasicTensor<T>& a);

/// Mean of squared differences, accumulated in double precision.
template <class T> double mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// [m,k] x [k,n] -> [m,n]. The transpose flags apply to the operands before
/// the product, so matmul(a, b, true, false) computes a^T b.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_a = false,
                      bool transpose_b = false);

/// Cross-correlation of x [N,C,H,W] with w [F,C,kh,kw] (kernel not flipped).
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, Conv2dParams p = {});

/// Gradient of conv2d with respect to its input, given the output gradient.
template <class T>
BasicTensor<T> conv2d_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w, const Shape& x_shape,
                                 Conv2dParams p);

/// Gradient of conv2d with respect to its weight, given the output gradient.
template <class T>
BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>& grad_out, const BasicTensor<T>& x, const Shape& w_shape,
                                  Conv2dParams p);

/// Adds a per-channel bias. x has the channel on axis 1; bias is [C]
/// (broadcast over batch and space) or [N,C] (broadcast over space).
template <class T> BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);
template <class T> void add_bias_inplace(BasicTensor<T>& x, const BasicTensor<T>& bias);

/// Reduces a gradient shaped like x onto the bias shape used by add_bias.
template <class T> BasicTensor<T> bias_grad(const BasicTensor<T>& grad_out, const Shape& bias_shape);

template <class T> BasicTensor<T> silu(const BasicTensor<T>& x);
template <class T> BasicTensor<T> silu_grad(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <class T> BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& x);
template <class T> BasicTensor<T> avgpool2x(const BasicTensor<T>& x);

/// Stacks [N,Ca,H,W] and [N,Cb,H,W] into [N,Ca+Cb,H,W].
template <class T> BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Channels [begin, begin+count) of a rank-4 tensor.
template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t count);

template <class T> bool all_finite(const BasicTensor<T>& x);

}  // namespace fastdiff
