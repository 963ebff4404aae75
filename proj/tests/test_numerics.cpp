// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "fastdiff/adam.hpp"
#include "fastdiff/autodiff.hpp"
#include "fastdiff/binary_io.hpp"
#include "fastdiff/ops.hpp"
#include "fastdiff/random.hpp"
#include "fastdiff/tensor.hpp"
#include "gradcheck.hpp"

using namespace fastdiff;
using binary::FormatError;
using fastdiff::testing::grad_check;
using fastdiff::testing::randn;
using fastdiff::testing::weighted_sum;

namespace {

// Direct seven-loop cross-correlation.
TensorD naive_conv(const TensorD& x, const TensorD& w, std::size_t stride, std::size_t pad) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
    TensorD y(Shape{n, f, ho, wo});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < f; ++o)
            for (std::size_t yy = 0; yy < ho; ++yy)
                for (std::size_t xx = 0; xx < wo; ++xx) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const long iy = static_cast<long>(yy * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) {
                                    continue;
                                }
                                acc += x.at(b, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                       w.at(o, ci, ky, kx);
                            }
                    y.at(b, o, yy, xx) = acc;
                }
    return y;
}

double max_abs_diff(const TensorD& a, const TensorD& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

constexpr double kLayerTol = 1e-4;

}  // namespace

TEST_CASE("tensor construction and reshape") {
    TensorD t(Shape{2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t[5] == 1.5);
    CHECK_THROWS_AS(TensorD(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    CHECK(TensorD::scalar(2.0).item() == 2.0);
    CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("tensor serialization round trip") {
    const Tensor a = randn(1, {2, 3, 4}).cast<float>();
    std::stringstream ss;
    write_tensor(ss, a);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "FDT1");
    CHECK(read_tensor<float>(ss) == a);

    std::stringstream bad("FDT2xxxx");
    CHECK_THROWS_AS(read_tensor<float>(bad), FormatError);
    std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_tensor<float>(truncated), FormatError);
    std::stringstream widened(bytes);
    CHECK(read_tensor<double>(widened) == a.cast<double>());
    std::string bad_code = bytes;
    bad_code[4] = 9;
    std::stringstream unknown(bad_code);
    CHECK_THROWS_AS(read_tensor<float>(unknown), FormatError);
}

TEST_CASE("elementwise identities") {
    const TensorD x = randn(2, {3, 4});
    CHECK(add(x, TensorD(x.shape())) == x);
    CHECK(mul(x, TensorD(x.shape(), 1.0)) == x);
    CHECK(sub(x, x) == TensorD(x.shape()));
    CHECK(scale(x, 2.0)[3] == doctest::Approx(2.0 * x[3]));
    CHECK_THROWS_AS(add(x, TensorD(Shape{4, 3})), ShapeError);
}

TEST_CASE("matmul examples") {
    const TensorD a(Shape{2, 2}, {1, 2, 3, 4});
    const TensorD b(Shape{2, 1}, {1, 1});
    CHECK(matmul(a, b) == TensorD(Shape{2, 1}, {3, 7}));
    const TensorD eye(Shape{2, 2}, {1, 0, 0, 1});
    CHECK(matmul(eye, a) == a);
    CHECK(matmul(a, a, true, false) == TensorD(Shape{2, 2}, {10, 14, 14, 20}));
    CHECK_THROWS_AS(matmul(a, TensorD(Shape{3, 1})), ShapeError);
}

TEST_CASE("conv2d examples") {
    const TensorD x = randn(3, {2, 3, 5, 5});
    TensorD one(Shape{3, 3, 1, 1});
    for (std::size_t i = 0; i < 3; ++i) {
        one.at(i, i, 0, 0) = 1.0;
    }
    CHECK(conv2d(x, one) == x);

    const TensorD constant(Shape{1, 1, 6, 6}, 0.7);
    const TensorD avg(Shape{1, 1, 3, 3}, 1.0 / 9.0);
    const TensorD y = conv2d(constant, avg, {1, 1});
    for (std::size_t r = 1; r < 5; ++r) {
        for (std::size_t c = 1; c < 5; ++c) {
            CHECK(y.at(0, 0, r, c) == doctest::Approx(0.7).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(conv2d(TensorD(Shape{1, 1, 6, 6}), TensorD(Shape{1, 1, 3, 3}), {2, 0}), ShapeError);
    CHECK_THROWS_AS(conv2d(TensorD(Shape{1, 2, 6, 6}), TensorD(Shape{1, 1, 3, 3})), ShapeError);
    CHECK_THROWS_AS(conv2d(TensorD(Shape{1, 1, 6, 6}), TensorD(Shape{1, 1, 2, 2})), ShapeError);
}

TEST_CASE("conv2d matches a direct loop") {
    struct Case {
        Shape x, w;
        std::size_t stride, pad;
    };
    const Case cases[] = {
        {{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1}, {{1, 2, 7, 9}, {3, 2, 3, 3}, 1, 0}, {{2, 4, 8, 8}, {5, 4, 1, 1}, 1, 0},
        {{1, 2, 9, 9}, {3, 2, 3, 3}, 2, 0}, {{2, 3, 9, 9}, {2, 3, 3, 3}, 2, 1}, {{1, 2, 6, 6}, {2, 2, 5, 5}, 1, 2},
    };
    std::uint64_t seed = 10;
    for (const auto& k : cases) {
        const TensorD x = randn(seed++, k.x);
        const TensorD w = randn(seed++, k.w);
        const TensorD ref = naive_conv(x, w, k.stride, k.pad);
        CHECK(max_abs_diff(conv2d(x, w, {k.stride, k.pad}), ref) < 1e-12);
        const Tensor yf = conv2d(x.cast<float>(), w.cast<float>(), {k.stride, k.pad});
        CHECK(max_abs_diff(yf.cast<double>(), ref) < 1e-4);
    }
}

TEST_CASE("resampling examples") {
    const TensorD one(Shape{1, 1, 1, 1}, {1});
    CHECK(upsample_nearest2x(one) == TensorD(Shape{1, 1, 2, 2}, 1.0));
    const TensorD q(Shape{1, 1, 2, 2}, {1, 3, 5, 7});
    CHECK(avgpool2x(q) == TensorD(Shape{1, 1, 1, 1}, {4}));
    const TensorD x = randn(4, {2, 3, 4, 6});
    CHECK(max_abs_diff(avgpool2x(upsample_nearest2x(x)), x) < 1e-15);
    CHECK_THROWS_AS(avgpool2x(TensorD(Shape{1, 1, 3, 4})), ShapeError);
}

TEST_CASE("silu, mse and concat examples") {
    CHECK(silu(TensorD(Shape{1}, {0.0}))[0] == 0.0);
    CHECK(silu(TensorD(Shape{1}, {2.0}))[0] == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))));
    const TensorD x = randn(5, {3, 3});
    CHECK(mse_loss(x, x) == 0.0);
    CHECK(mse_loss(TensorD(Shape{4, 4}), TensorD(Shape{4, 4}, 1.0)) == 1.0);
    const TensorD a = randn(6, {2, 1, 2, 2});
    const TensorD b = randn(7, {2, 3, 2, 2});
    const TensorD c = concat_channels(a, b);
    CHECK(c.shape() == Shape{2, 4, 2, 2});
    CHECK(c.at(1, 0, 1, 1) == a.at(1, 0, 1, 1));
    CHECK(c.at(1, 3, 0, 1) == b.at(1, 2, 0, 1));
    CHECK(slice_channels(c, 1, 3) == b);
    CHECK_THROWS_AS(concat_channels(a, randn(8, {2, 1, 3, 2})), ShapeError);
}

TEST_CASE("gradient checks: elementwise") {
    CHECK(grad_check({randn(1, {3, 4}), randn(2, {3, 4})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::add(v[0], v[1])); }) < kLayerTol);
    CHECK(grad_check({randn(3, {3, 4}), randn(4, {3, 4})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::sub(v[0], v[1])); }) < kLayerTol);
    CHECK(grad_check({randn(5, {3, 4}), randn(6, {3, 4})},
                     [](Graph<double>&, const auto& v) { return ad::sum(ad::mul(v[0], v[1])); }) < kLayerTol);
    CHECK(grad_check({randn(7, {5})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::scale(v[0], -1.7)); }) < kLayerTol);
}

TEST_CASE("sum(a * b) has gradient b") {
    const TensorD a = randn(11, {4});
    const TensorD b = randn(12, {4});
    Graph<double> g;
    const auto va = g.variable(a);
    const auto vb = g.constant(b);
    g.backward(ad::sum(ad::mul(va, vb)));
    CHECK(g.grad(va) == b);
}

TEST_CASE("gradient checks: matmul") {
    CHECK(grad_check({randn(13, {3, 4}), randn(14, {4, 2})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::matmul(v[0], v[1])); }) <
          kLayerTol);
}

TEST_CASE("gradient checks: conv2d") {
    auto conv = [](Conv2dParams p) {
        return [p](Graph<double>& g, const std::vector<Var<double>>& v) {
            return weighted_sum(g, ad::conv2d(v[0], v[1], p));
        };
    };
    CHECK(grad_check({randn(15, {1, 2, 6, 6}), randn(16, {3, 2, 3, 3})}, conv({1, 0})) < kLayerTol);
    CHECK(grad_check({randn(17, {2, 2, 6, 6}), randn(18, {3, 2, 3, 3})}, conv({1, 1})) < kLayerTol);
    CHECK(grad_check({randn(19, {1, 2, 7, 7}), randn(20, {2, 2, 3, 3})}, conv({2, 1})) < kLayerTol);
    CHECK(grad_check({randn(21, {2, 3, 4, 4}), randn(22, {2, 3, 1, 1})}, conv({1, 0})) < kLayerTol);
    // Fused bias, shared [F] and per-sample [N,F].
    CHECK(grad_check({randn(23, {2, 2, 5, 5}), randn(24, {3, 2, 3, 3}), randn(25, {3})},
                     [](Graph<double>& g, const auto& v) {
                         return weighted_sum(g, ad::conv2d(v[0], v[1], v[2], {1, 1}));
                     }) < kLayerTol);
    CHECK(grad_check({randn(26, {2, 2, 5, 5}), randn(27, {3, 2, 3, 3}), randn(28, {2, 3})},
                     [](Graph<double>& g, const auto& v) {
                         return weighted_sum(g, ad::conv2d(v[0], v[1], v[2], {1, 1}));
                     }) < kLayerTol);
}

TEST_CASE("gradient checks: bias, activation, resampling, concat, loss") {
    CHECK(grad_check({randn(29, {2, 3, 2, 2}), randn(30, {3})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::add_bias(v[0], v[1])); }) <
          kLayerTol);
    CHECK(grad_check({randn(31, {2, 3, 2, 2}), randn(32, {2, 3})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::add_bias(v[0], v[1])); }) <
          kLayerTol);
    CHECK(grad_check({randn(33, {2, 3, 4})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::silu(v[0])); }) < kLayerTol);
    CHECK(grad_check({randn(34, {1, 2, 3, 3})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::upsample_nearest2x(v[0])); }) <
          kLayerTol);
    CHECK(grad_check({randn(35, {1, 2, 4, 6})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::avgpool2x(v[0])); }) < kLayerTol);
    CHECK(grad_check({randn(36, {2, 1, 3, 3}), randn(37, {2, 2, 3, 3})},
                     [](Graph<double>& g, const auto& v) { return weighted_sum(g, ad::concat_channels(v[0], v[1])); }) <
          kLayerTol);
    CHECK(grad_check({randn(38, {2, 3, 3}), randn(39, {2, 3, 3})},
                     [](Graph<double>&, const auto& v) { return ad::mse_loss(v[0], v[1]); }) < kLayerTol);
}

TEST_CASE("backward of half squared norm is the parameter") {
    const TensorD p = randn(40, {5});
    Graph<double> g;
    const auto v = g.parameter(p);
    g.backward(ad::scale(ad::sum(ad::mul(v, v)), 0.5));
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(g.grad(v)[i] == doctest::Approx(p[i]).epsilon(1e-15));
    }
}

TEST_CASE("gradients accumulate across shared uses") {
    const TensorD p = randn(41, {3});
    Graph<double> g;
    const auto v = g.variable(p);
    g.backward(ad::sum(ad::add(v, ad::add(v, v))));
    CHECK(g.grad(v) == TensorD(Shape{3}, 3.0));
}

TEST_CASE("backward errors") {
    Graph<double> g;
    const auto v = g.variable(randn(42, {3}));
    CHECK_THROWS_AS(g.backward(v), ShapeError);
    Graph<double> h;
    const auto c = h.constant(randn(43, {1}));
    CHECK_THROWS(h.backward(c));
}

TEST_CASE("random source determinism and split") {
    RandomSource a(7), b(7);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    RandomSource r1(7), r2(7);
    CHECK(gaussian<float>(r1, {64}) == gaussian<float>(r2, {64}));
    const RandomSource root(5);
    RandomSource s1 = root.split(1), s1b = root.split(1), s2 = root.split(2);
    const auto x = s1.next_u64();
    CHECK(x == s1b.next_u64());
    CHECK(x != s2.next_u64());
    RandomSource c(9);
    const auto st = c.state();
    const double n1 = c.normal();
    c.restore(st);
    CHECK(c.normal() == n1);
}

TEST_CASE("random source bounded draws") {
    RandomSource rs(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto k = rs.below(7);
        REQUIRE(k < 7);
        seen.insert(k);
        const double u = rs.uniform(-2.0, 3.0);
        REQUIRE(u >= -2.0);
        REQUIRE(u < 3.0);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("gaussian moments over 1e6 draws") {
    RandomSource rs(2026);
    const TensorD x = gaussian<double>(rs, {1000000});
    double mean = 0.0;
    for (double v : x.data()) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size() - 1);
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("gaussian passes a Kolmogorov-Smirnov test") {
    RandomSource rs(77);
    const TensorD x = gaussian<double>(rs, {100000});
    std::vector<double> v(x.data().begin(), x.data().end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double cdf = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
        d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
    }
    // Asymptotic 1% critical value 1.628 / sqrt(n).
    CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("adam single step") {
    std::vector<TensorD> p = {TensorD(Shape{1}, {0.5})};
    std::vector<TensorD> g = {TensorD(Shape{1}, {1.0})};
    AdamState<double> st(AdamOptions{}, p);
    adam_step<double>(p, g, st);
    CHECK(p[0][0] - 0.5 == doctest::Approx(-2e-4).epsilon(1e-6));
    CHECK(st.step == 1);
    CHECK(st.v[0][0] >= 0.0);
}

TEST_CASE("adam converges on a convex scalar") {
    std::vector<TensorD> p = {TensorD(Shape{1}, {0.0})};
    AdamOptions o;
    o.lr = 0.1;
    AdamState<double> st(o, p);
    for (int i = 0; i < 200; ++i) {
        std::vector<TensorD> g = {TensorD(Shape{1}, {2.0 * (p[0][0] - 3.0)})};
        adam_step<double>(p, g, st);
    }
    CHECK(std::abs(p[0][0] - 3.0) < 1e-2);
}

TEST_CASE("adam rejects bad gradients and round trips its state") {
    std::vector<TensorD> p = {randn(50, {3}), randn(51, {2, 2})};
    AdamState<double> st(AdamOptions{}, p);
    std::vector<TensorD> bad_shape = {randn(52, {3}), randn(53, {4})};
    CHECK_THROWS_AS(adam_step<double>(p, bad_shape, st), ShapeError);
    std::vector<TensorD> nan = {TensorD(Shape{3}, std::nan("")), randn(54, {2, 2})};
    CHECK_THROWS_AS(adam_step<double>(p, nan, st), NumericError);

    std::vector<TensorD> g = {randn(55, {3}), randn(56, {2, 2})};
    adam_step<double>(p, g, st);
    std::stringstream ss;
    write_adam_state(ss, st);
    const auto back = read_adam_state<double>(ss);
    CHECK(back.step == st.step);
    CHECK(back.m == st.m);
    CHECK(back.v == st.v);
    CHECK(back.options.lr == st.options.lr);
}
