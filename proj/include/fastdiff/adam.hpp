// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fastdiff/tensor.hpp"

namespace fastdiff {

struct AdamOptions {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators, one pair per parameter tensor.
template <class T>
struct AdamState {
    AdamOptions options;
    std::vector<BasicTensor<T>> m;
    std::vector<BasicTensor<T>> v;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(AdamOptions opts, std::span<const BasicTensor<T>> params);
};

/// One bias-corrected Adam update, in place. Throws NumericError naming the
/// first parameter whose gradient is not finite; parameters are untouched in
/// that case.
template <class T>
void adam_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, AdamState<T>& state);

template <class T>
void write_adam_state(std::ostream& out, const AdamState<T>& state);
template <class T>
AdamState<T> read_adam_state(std::istream& in);

}  // namespace fastdiff
