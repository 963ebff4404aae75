// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "fastdiff/tensor.hpp"

namespace fastdiff {

/// Deterministic splittable random stream (SplitMix64).
///
/// The state is a single 64-bit counter, so a stream can be checkpointed and
/// restored exactly. `split(key)` derives an independent child stream from the
/// current seed and a key without advancing the parent, which lets workers draw
/// per-item randomness that does not depend on scheduling order.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed = 0) noexcept : seed_(seed), state_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t state() const noexcept { return state_; }
    void restore(std::uint64_t state) noexcept { state_ = state; }

    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept;

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// One standard normal draw (Box-Muller; the paired value is discarded).
    double normal() noexcept;

    RandomSource split(std::uint64_t key) const noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

/// I.i.d. N(0, 1) entries, filled pairwise by Box-Muller from the stream.
template <class T>
BasicTensor<T> gaussian(RandomSource& rs, Shape shape);

/// I.i.d. U(lo, hi) entries.
template <class T>
BasicTensor<T> uniform(RandomSource& rs, Shape shape, double lo, double hi);

}  // namespace fastdiff
