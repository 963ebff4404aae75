// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/adam.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "fastdiff/binary_io.hpp"
#include "fastdiff/ops.hpp"

namespace fastdiff {

template <class T>
AdamState<T>::AdamState(AdamOptions opts, std::span<const BasicTensor<T>> params) : options(opts) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
        m.emplace_back(p.shape());
        v.emplace_back(p.shape());
    }
}

template <class T>
void adam_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, AdamState<T>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                         " grads, " + std::to_string(state.m.size()) + " moment slots");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].shape() != grads[k].shape() || params[k].shape() != state.m[k].shape()) {
            throw ShapeError("adam_step: parameter " + std::to_string(k) + " shape " +
                             shape_to_string(params[k].shape()) + " disagrees with its gradient or state");
        }
        if (!all_finite(grads[k])) {
            throw NumericError("adam_step: non-finite gradient for parameter " + std::to_string(k) + " at step " +
                               std::to_string(state.step + 1));
        }
    }

    const auto& o = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(o.beta1, t);
    const double correction2 = 1.0 - std::pow(o.beta2, t);
    const T b1 = static_cast<T>(o.beta1);
    const T b2 = static_cast<T>(o.beta2);
    const T step_size = static_cast<T>(o.lr / correction1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
    const T eps = static_cast<T>(o.eps);

    for (std::size_t k = 0; k < params.size(); ++k) {
        T* p = params[k].raw();
        const T* g = grads[k].raw();
        T* m = state.m[k].raw();
        T* v = state.v[k].raw();
        const std::size_t n = params[k].size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
        }
    }
}

template <class T>
void write_adam_state(std::ostream& out, const AdamState<T>& state) {
    binary::put_magic(out, "ADAM");
    binary::put<double>(out, state.options.lr);
    binary::put<double>(out, state.options.beta1);
    binary::put<double>(out, state.options.beta2);
    binary::put<double>(out, state.options.eps);
    binary::put<std::uint64_t>(out, state.step);
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.m.size()));
    for (std::size_t k = 0; k < state.m.size(); ++k) {
        write_tensor(out, state.m[k]);
        write_tensor(out, state.v[k]);
    }
}

template <class T>
AdamState<T> read_adam_state(std::istream& in) {
    binary::expect_magic(in, "ADAM");
    AdamState<T> s;
    s.options.lr = binary::get<double>(in);
    s.options.beta1 = binary::get<double>(in);
    s.options.beta2 = binary::get<double>(in);
    s.options.eps = binary::get<double>(in);
    s.step = binary::get<std::uint64_t>(in);
    const auto n = binary::get<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < n; ++k) {
        s.m.push_back(read_tensor<T>(in));
        s.v.push_back(read_tensor<T>(in));
    }
    return s;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<BasicTensor<float>>, std::span<const BasicTensor<float>>, AdamState<float>&);
template void adam_step(std::span<BasicTensor<double>>, std::span<const BasicTensor<double>>, AdamState<double>&);
template void write_adam_state(std::ostream&, const AdamState<float>&);
template void write_adam_state(std::ostream&, const AdamState<double>&);
template AdamState<float> read_adam_state(std::istream&);
template AdamState<double> read_adam_state(std::istream&);

}  // namespace fastdiff
