// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/random.hpp"

#include <cmath>
#include <numbers>

namespace fastdiff {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Box-Muller pair from two uniforms; u1 is mapped into (0, 1].
inline void box_muller(double u1, double u2, double& z0, double& z1) noexcept {
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    z0 = r * std::cos(theta);
    z1 = r * std::sin(theta);
}

}  // namespace

std::uint64_t RandomSource::next_u64() noexcept {
    state_ += kGolden;
    return mix64(state_);
}

double RandomSource::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomSource::below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection keeps the result unbiased.
    while (true) {
        const std::uint64_t x = next_u64();
        const __uint128_t m = static_cast<__uint128_t>(x) * n;
        const auto low = static_cast<std::uint64_t>(m);
        if (low >= n || low >= (-n) % n) {
            return static_cast<std::uint64_t>(m >> 64);
        }
    }
}

double RandomSource::normal() noexcept {
    double z0;
    double z1;
    box_muller(uniform(), uniform(), z0, z1);
    return z0;
}

RandomSource RandomSource::split(std::uint64_t key) const noexcept {
    return RandomSource(mix64(seed_ ^ mix64(key + kGolden)) + key);
}

template <class T>
BasicTensor<T> gaussian(RandomSource& rs, Shape shape) {
    BasicTensor<T> out(std::move(shape));
    auto data = out.data();
    std::size_t i = 0;
    for (; i + 1 < data.size(); i += 2) {
        double z0;
        double z1;
        box_muller(rs.uniform(), rs.uniform(), z0, z1);
        data[i] = static_cast<T>(z0);
        data[i + 1] = static_cast<T>(z1);
    }
    if (i < data.size()) {
        data[i] = static_cast<T>(rs.normal());
    }
    return out;
}

template <class T>
BasicTensor<T> uniform(RandomSource& rs, Shape shape, double lo, double hi) {
    BasicTensor<T> out(std::move(shape));
    for (auto& v : out.data()) {
        v = static_cast<T>(rs.uniform(lo, hi));
    }
    return out;
}

template BasicTensor<float> gaussian(RandomSource&, Shape);
template BasicTensor<double> gaussian(RandomSource&, Shape);
template BasicTensor<float> uniform(RandomSource&, Shape, double, double);
template BasicTensor<double> uniform(RandomSource&, Shape, double, double);

}  // namespace fastdiff
