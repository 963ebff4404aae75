// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace fastdiff {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
    }
}

void require_rank4(const Shape& s, const char* op) {
    if (s.size() != 4) {
        throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + shape_to_string(s));
    }
}

template <class T, class F>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op, F f) {
    require_same_shape(a.shape(), b.shape(), op);
    BasicTensor<T> out(a.shape());
    const T* pa = a.raw();
    const T* pb = b.raw();
    T* po = out.raw();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        po[i] = f(pa[i], pb[i]);
    }
    return out;
}

struct ConvGeometry {
    std::size_t n, c, h, w;
    std::size_t f, kh, kw;
    std::size_t ho, wo;
    std::size_t stride, pad;

    std::size_t rows() const { return c * kh * kw; }
    std::size_t cols() const { return n * ho * wo; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& w, Conv2dParams p) {
    require_rank4(x, "conv2d");
    if (w.size() != 4) {
        throw ShapeError("conv2d: weight must be [F,C,kh,kw], got " + shape_to_string(w));
    }
    if (w[1] != x[1]) {
        throw ShapeError("conv2d: input has " + std::to_string(x[1]) + " channels, weight expects " +
                         std::to_string(w[1]));
    }
    if (w[2] % 2 == 0 || w[3] % 2 == 0) {
        throw ShapeError("conv2d: kernel extents must be odd, got " + shape_to_string(w));
    }
    if (p.stride == 0) {
        throw ShapeError("conv2d: stride must be positive");
    }
    ConvGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], 0, 0, p.stride, p.padding};
    const auto span_h = static_cast<std::ptrdiff_t>(g.h + 2 * g.pad) - static_cast<std::ptrdiff_t>(g.kh);
    const auto span_w = static_cast<std::ptrdiff_t>(g.w + 2 * g.pad) - static_cast<std::ptrdiff_t>(g.kw);
    if (span_h < 0 || span_w < 0 || span_h % static_cast<std::ptrdiff_t>(g.stride) != 0 ||
        span_w % static_cast<std::ptrdiff_t>(g.stride) != 0) {
        throw ShapeError("conv2d: non-integral output extent for input " + shape_to_string(x) + ", kernel " +
                         shape_to_string(w) + ", stride " + std::to_string(p.stride) + ", padding " +
                         std::to_string(p.padding));
    }
    g.ho = static_cast<std::size_t>(span_h) / g.stride + 1;
    g.wo = static_cast<std::size_t>(span_w) / g.stride + 1;
    return g;
}

// Valid output columns [begin, end) for kernel tap kx along one image row.
inline void valid_range(std::size_t k, const ConvGeometry& g, std::size_t extent, std::size_t out_extent,
                        std::size_t& begin, std::size_t& end) {
    // input index = o * stride + k - pad must lie in [0, extent)
    const auto pad = static_cast<std::ptrdiff_t>(g.pad);
    const auto kk = static_cast<std::ptrdiff_t>(k);
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    std::ptrdiff_t lo = pad - kk;
    lo = lo <= 0 ? 0 : (lo + s - 1) / s;
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(extent) - 1 + pad - kk;
    hi = hi < 0 ? -1 : hi / s;
    begin = static_cast<std::size_t>(std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(out_extent)));
    end = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(hi + 1, static_cast<std::ptrdiff_t>(begin),
                                                             static_cast<std::ptrdiff_t>(out_extent)));
}

// cols is [C*kh*kw, ho*wo] for one batch element, row-major.
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
    const std::size_t plane_out = g.ho * g.wo;
    for (std::size_t c = 0; c < g.c; ++c) {
        const T* src = x + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            std::size_t oy_begin;
            std::size_t oy_end;
            valid_range(ky, g, g.h, g.ho, oy_begin, oy_end);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                std::size_t ox_begin;
                std::size_t ox_end;
                valid_range(kx, g, g.w, g.wo, ox_begin, ox_end);
                T* dst = cols + ((c * g.kh + ky) * g.kw + kx) * plane_out;
                std::fill(dst, dst + oy_begin * g.wo, T(0));
                for (std::size_t oy = oy_begin; oy < oy_end; ++oy) {
                    const T* srow = src + (oy * g.stride + ky - g.pad) * g.w;
                    T* d = dst + oy * g.wo;
                    std::fill(d, d + ox_begin, T(0));
                    if (g.stride == 1) {
                        const T* s = srow + ox_begin + kx - g.pad;
                        std::copy(s, s + (ox_end - ox_begin), d + ox_begin);
                    } else {
                        for (std::size_t ox = ox_begin; ox < ox_end; ++ox) {
                            d[ox] = srow[ox * g.stride + kx - g.pad];
                        }
                    }
                    std::fill(d + ox_end, d + g.wo, T(0));
                }
                std::fill(dst + oy_end * g.wo, dst + plane_out, T(0));
            }
        }
    }
}

template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* x) {
    const std::size_t plane_out = g.ho * g.wo;
    for (std::size_t c = 0; c < g.c; ++c) {
        T* dst = x + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            std::size_t oy_begin;
            std::size_t oy_end;
            valid_range(ky, g, g.h, g.ho, oy_begin, oy_end);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                std::size_t ox_begin;
                std::size_t ox_end;
                valid_range(kx, g, g.w, g.wo, ox_begin, ox_end);
                const T* src = cols + ((c * g.kh + ky) * g.kw + kx) * plane_out;
                for (std::size_t oy = oy_begin; oy < oy_end; ++oy) {
                    T* drow = dst + (oy * g.stride + ky - g.pad) * g.w;
                    const T* s = src + oy * g.wo;
                    if (g.stride == 1) {
                        T* d = drow + kx - g.pad;
                        for (std::size_t ox = ox_begin; ox < ox_end; ++ox) {
                            d[ox] += s[ox];
                        }
                    } else {
                        for (std::size_t ox = ox_begin; ox < ox_end; ++ox) {
                            drow[ox * g.stride + kx - g.pad] += s[ox];
                        }
                    }
                }
            }
        }
    }
}

// Per-thread scratch reused across calls; contents are not initialized.
template <class T>
T* scratch(std::size_t slot, std::size_t n) {
    thread_local AlignedVector<T> buffers[3];
    auto& buffer = buffers[slot];
    if (buffer.size() < n) {
        buffer.resize(n);
    }
    return buffer.data();
}

bool is_wide(const ConvGeometry& g) { return g.stride == 1 && !(g.kh == 1 && g.kw == 1 && g.pad == 0); }

// Stride-1 convolutions use a "wide" layout: each input plane is zero-padded
// to (h + 2 pad) x wp with wp = w + 2 pad, and outputs are computed on
// ho x wp positions, of which the last wp - wo per row are discarded. Every
// im2col row is then a single contiguous copy from the padded plane.
struct WideLayout {
    std::size_t wp;      // padded row length
    std::size_t plane;   // padded plane length, with slack for the last taps
    std::size_t q;       // wide output positions, ho * wp
};

WideLayout wide_layout(const ConvGeometry& g) {
    const std::size_t wp = g.w + 2 * g.pad;
    return {wp, (g.h + 2 * g.pad) * wp + g.kw - 1, g.ho * wp};
}

template <class T>
void pad_planes(const T* x, const ConvGeometry& g, const WideLayout& l, T* xp) {
    for (std::size_t c = 0; c < g.c; ++c) {
        T* dst = xp + c * l.plane;
        std::fill(dst, dst + l.plane, T(0));
        const T* src = x + c * g.h * g.w;
        for (std::size_t y = 0; y < g.h; ++y) {
            std::copy_n(src + y * g.w, g.w, dst + (y + g.pad) * l.wp + g.pad);
        }
    }
}

template <class T>
void wide_im2col(const T* xp, const ConvGeometry& g, const WideLayout& l, T* cols) {
    for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                std::copy_n(xp + c * l.plane + ky * l.wp + kx, l.q, cols + ((c * g.kh + ky) * g.kw + kx) * l.q);
            }
        }
    }
}

// Accumulates wide columns back onto padded planes, then keeps the interior.
template <class T>
void wide_col2im(const T* cols, const ConvGeometry& g, const WideLayout& l, T* xp, T* x) {
    for (std::size_t c = 0; c < g.c; ++c) {
        T* plane = xp + c * l.plane;
        std::fill(plane, plane + l.plane, T(0));
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const T* src = cols + ((c * g.kh + ky) * g.kw + kx) * l.q;
                T* dst = plane + ky * l.wp + kx;
                for (std::size_t i = 0; i < l.q; ++i) {
                    dst[i] += src[i];
                }
            }
        }
        T* out = x + c * g.h * g.w;
        for (std::size_t y = 0; y < g.h; ++y) {
            std::copy_n(plane + (y + g.pad) * l.wp + g.pad, g.w, out + y * g.w);
        }
    }
}

// [F, ho * wp] -> [F, ho, wo], dropping the junk columns.
template <class T>
void narrow_rows(const T* wide, std::size_t f, const ConvGeometry& g, const WideLayout& l, T* out) {
    for (std::size_t k = 0; k < f; ++k) {
        for (std::size_t y = 0; y < g.ho; ++y) {
            std::copy_n(wide + k * l.q + y * l.wp, g.wo, out + (k * g.ho + y) * g.wo);
        }
    }
}

// [F, ho, wo] -> [F, ho * wp] with zeros in the junk columns.
template <class T>
void widen_rows(const T* in, std::size_t f, const ConvGeometry& g, const WideLayout& l, T* wide) {
    for (std::size_t k = 0; k < f; ++k) {
        for (std::size_t y = 0; y < g.ho; ++y) {
            T* row = wide + k * l.q + y * l.wp;
            std::copy_n(in + (k * g.ho + y) * g.wo, g.wo, row);
            std::fill(row + g.wo, row + l.wp, T(0));
        }
    }
}

bool is_pointwise(const ConvGeometry& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return zip(a, b, "add", [](T x, T y) { return x + y; });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return zip(a, b, "sub", [](T x, T y) { return x - y; });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return zip(a, b, "mul", [](T x, T y) { return x * y; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, double s) {
    BasicTensor<T> out(a.shape());
    const auto k = static_cast<T>(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] * k;
    }
    return out;
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, double s) {
    BasicTensor<T> out(a.shape());
    const auto k = static_cast<T>(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] + k;
    }
    return out;
}

template <class T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add_inplace");
    T* pa = a.raw();
    const T* pb = b.raw();
    for (std::size_t i = 0; i < a.size(); ++i) {
        pa[i] += pb[i];
    }
}

template <class T>
double sum(const BasicTensor<T>& a) {
    double acc = 0.0;
    for (auto v : a.data()) {
        acc += static_cast<double>(v);
    }
    return acc;
}

template <class T>
double mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    require_same_shape(pred.shape(), target.shape(), "mse_loss");
    if (pred.empty()) {
        throw ShapeError("mse_loss: empty operands");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_a, bool transpose_b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: operands must be rank 2, got " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
    }
    const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
    const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
    const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
    const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
    if (k != kb) {
        throw ShapeError("matmul: inner extents disagree, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    BasicTensor<T> out(Shape{m, n});
    ConstMatrixMap<T> ma(a.raw(), a.dim(0), a.dim(1));
    ConstMatrixMap<T> mb(b.raw(), b.dim(0), b.dim(1));
    MatrixMap<T> mo(out.raw(), m, n);
    if (!transpose_a && !transpose_b) {
        mo.noalias() = ma * mb;
    } else if (transpose_a && !transpose_b) {
        mo.noalias() = ma.transpose() * mb;
    } else if (!transpose_a && transpose_b) {
        mo.noalias() = ma * mb.transpose();
    } else {
        mo.noalias() = ma.transpose() * mb.transpose();
    }
    return out;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, Conv2dParams p) {
    const auto g = conv_geometry(x.shape(), w.shape(), p);
    const std::size_t plane_in = g.h * g.w;
    const std::size_t plane_out = g.ho * g.wo;
    BasicTensor<T> out(Shape{g.n, g.f, g.ho, g.wo});
    ConstMatrixMap<T> mw(w.raw(), g.f, g.rows());
    if (is_wide(g)) {
        const auto l = wide_layout(g);
        T* xp = scratch<T>(0, g.c * l.plane);
        T* cols = scratch<T>(1, g.rows() * l.q);
        T* wide = scratch<T>(2, g.f * l.q);
        for (std::size_t n = 0; n < g.n; ++n) {
            pad_planes(x.raw() + n * g.c * plane_in, g, l, xp);
            wide_im2col(xp, g, l, cols);
            MatrixMap<T>(wide, g.f, l.q).noalias() = mw * ConstMatrixMap<T>(cols, g.rows(), l.q);
            narrow_rows(wide, g.f, g, l, out.raw() + n * g.f * plane_out);
        }
        return out;
    }
    T* cols = is_pointwise(g) ? nullptr : scratch<T>(1, g.rows() * plane_out);
    for (std::size_t n = 0; n < g.n; ++n) {
        const T* xn = x.raw() + n * g.c * plane_in;
        if (cols != nullptr) {
            im2col(xn, g, cols);
        }
        ConstMatrixMap<T> mc(cols != nullptr ? cols : xn, g.rows(), plane_out);
        MatrixMap<T> my(out.raw() + n * g.f * plane_out, g.f, plane_out);
        my.noalias() = mw * mc;
    }
    return out;
}

template <class T>
BasicTensor<T> conv2d_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w, const Shape& x_shape,
                                 Conv2dParams p) {
    const auto g = conv_geometry(x_shape, w.shape(), p);
    require_same_shape(grad_out.shape(), Shape{g.n, g.f, g.ho, g.wo}, "conv2d_grad_input");
    const std::size_t plane_in = g.h * g.w;
    const std::size_t plane_out = g.ho * g.wo;
    BasicTensor<T> gx(x_shape);
    ConstMatrixMap<T> mw(w.raw(), g.f, g.rows());
    if (is_wide(g)) {
        const auto l = wide_layout(g);
        T* xp = scratch<T>(0, g.c * l.plane);
        T* gcols = scratch<T>(1, g.rows() * l.q);
        T* wide = scratch<T>(2, g.f * l.q);
        for (std::size_t n = 0; n < g.n; ++n) {
            widen_rows(grad_out.raw() + n * g.f * plane_out, g.f, g, l, wide);
            MatrixMap<T>(gcols, g.rows(), l.q).noalias() = mw.transpose() * ConstMatrixMap<T>(wide, g.f, l.q);
            wide_col2im(gcols, g, l, xp, gx.raw() + n * g.c * plane_in);
        }
        return gx;
    }
    const bool pointwise = is_pointwise(g);
    T* gcols = pointwise ? nullptr : scratch<T>(1, g.rows() * plane_out);
    for (std::size_t n = 0; n < g.n; ++n) {
        ConstMatrixMap<T> mgy(grad_out.raw() + n * g.f * plane_out, g.f, plane_out);
        T* gxn = gx.raw() + n * g.c * plane_in;
        if (pointwise) {
            MatrixMap<T>(gxn, g.rows(), plane_out).noalias() = mw.transpose() * mgy;
        } else {
            MatrixMap<T>(gcols, g.rows(), plane_out).noalias() = mw.transpose() * mgy;
            col2im(gcols, g, gxn);
        }
    }
    return gx;
}

template <class T>
BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>& grad_out, const BasicTensor<T>& x, const Shape& w_shape,
                                  Conv2dParams p) {
    const auto g = conv_geometry(x.shape(), w_shape, p);
    require_same_shape(grad_out.shape(), Shape{g.n, g.f, g.ho, g.wo}, "conv2d_grad_weight");
    const std::size_t plane_in = g.h * g.w;
    const std::size_t plane_out = g.ho * g.wo;
    BasicTensor<T> gw(w_shape);
    MatrixMap<T> mgw(gw.raw(), g.f, g.rows());
    if (is_wide(g)) {
        const auto l = wide_layout(g);
        T* xp = scratch<T>(0, g.c * l.plane);
        T* cols = scratch<T>(1, g.rows() * l.q);
        T* wide = scratch<T>(2, g.f * l.q);
        for (std::size_t n = 0; n < g.n; ++n) {
            pad_planes(x.raw() + n * g.c * plane_in, g, l, xp);
            wide_im2col(xp, g, l, cols);
            widen_rows(grad_out.raw() + n * g.f * plane_out, g.f, g, l, wide);
            mgw.noalias() += ConstMatrixMap<T>(wide, g.f, l.q) * ConstMatrixMap<T>(cols, g.rows(), l.q).transpose();
        }
        return gw;
    }
    T* cols = is_pointwise(g) ? nullptr : scratch<T>(1, g.rows() * plane_out);
    for (std::size_t n = 0; n < g.n; ++n) {
        const T* xn = x.raw() + n * g.c * plane_in;
        if (cols != nullptr) {
            im2col(xn, g, cols);
        }
        ConstMatrixMap<T> mgy(grad_out.raw() + n * g.f * plane_out, g.f, plane_out);
        ConstMatrixMap<T> mc(cols != nullptr ? cols : xn, g.rows(), plane_out);
        mgw.noalias() += mgy * mc.transpose();
    }
    return gw;
}

namespace {

struct BiasLayout {
    std::size_t n, c, inner;
    bool per_sample;
};

BiasLayout bias_layout(const Shape& x, const Shape& bias) {
    if (x.size() < 2) {
        throw ShapeError("add_bias: input must have a channel axis, got " + shape_to_string(x));
    }
    std::size_t inner = 1;
    for (std::size_t i = 2; i < x.size(); ++i) {
        inner *= x[i];
    }
    if (bias.size() == 1 && bias[0] == x[1]) {
        return {x[0], x[1], inner, false};
    }
    if (bias.size() == 2 && bias[0] == x[0] && bias[1] == x[1]) {
        return {x[0], x[1], inner, true};
    }
    throw ShapeError("add_bias: bias " + shape_to_string(bias) + " incompatible with " + shape_to_string(x));
}

}  // namespace

template <class T>
void add_bias_inplace(BasicTensor<T>& x, const BasicTensor<T>& bias) {
    const auto l = bias_layout(x.shape(), bias.shape());
    for (std::size_t n = 0; n < l.n; ++n) {
        for (std::size_t c = 0; c < l.c; ++c) {
            const T b = bias[l.per_sample ? n * l.c + c : c];
            T* dst = x.raw() + (n * l.c + c) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) {
                dst[i] += b;
            }
        }
    }
}

template <class T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
    BasicTensor<T> out = x;
    add_bias_inplace(out, bias);
    return out;
}

template <class T>
BasicTensor<T> bias_grad(const BasicTensor<T>& grad_out, const Shape& bias_shape) {
    const auto l = bias_layout(grad_out.shape(), bias_shape);
    BasicTensor<T> gb(bias_shape);
    for (std::size_t n = 0; n < l.n; ++n) {
        for (std::size_t c = 0; c < l.c; ++c) {
            const T* src = grad_out.raw() + (n * l.c + c) * l.inner;
            T acc = 0;
            for (std::size_t i = 0; i < l.inner; ++i) {
                acc += src[i];
            }
            gb[l.per_sample ? n * l.c + c : c] += acc;
        }
    }
    return gb;
}

template <class T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
    BasicTensor<T> out(x.shape());
    const auto n = static_cast<Eigen::Index>(x.size());
    ConstArrayMap<T> ax(x.raw(), n);
    ArrayMap<T>(out.raw(), n) = ax / (T(1) + (-ax).exp());
    return out;
}

template <class T>
BasicTensor<T> silu_grad(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
    require_same_shape(x.shape(), grad_out.shape(), "silu_grad");
    BasicTensor<T> out(x.shape());
    const auto n = static_cast<Eigen::Index>(x.size());
    ConstArrayMap<T> ax(x.raw(), n);
    ConstArrayMap<T> ag(grad_out.raw(), n);
    const auto s = (T(1) + (-ax).exp()).inverse();
    ArrayMap<T>(out.raw(), n) = ag * s * (T(1) + ax * (T(1) - s));
    return out;
}

template <class T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& x) {
    require_rank4(x.shape(), "upsample_nearest2x");
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t h = x.dim(2);
    const std::size_t w = x.dim(3);
    BasicTensor<T> out(Shape{x.dim(0), x.dim(1), 2 * h, 2 * w});
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.raw() + p * h * w;
        T* dst = out.raw() + p * 4 * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            T* row0 = dst + (2 * y) * 2 * w;
            for (std::size_t xx = 0; xx < w; ++xx) {
                row0[2 * xx] = row0[2 * xx + 1] = src[y * w + xx];
            }
            std::memcpy(row0 + 2 * w, row0, 2 * w * sizeof(T));
        }
    }
    return out;
}

template <class T>
BasicTensor<T> avgpool2x(const BasicTensor<T>& x) {
    require_rank4(x.shape(), "avgpool2x");
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
        throw ShapeError("avgpool2x: spatial extents must be even, got " + shape_to_string(x.shape()));
    }
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t h = x.dim(2) / 2;
    const std::size_t w = x.dim(3) / 2;
    BasicTensor<T> out(Shape{x.dim(0), x.dim(1), h, w});
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.raw() + p * 4 * h * w;
        T* dst = out.raw() + p * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            const T* r0 = src + (2 * y) * 2 * w;
            const T* r1 = r0 + 2 * w;
            for (std::size_t xx = 0; xx < w; ++xx) {
                dst[y * w + xx] = T(0.25) * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
            }
        }
    }
    return out;
}

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank4(a.shape(), "concat_channels");
    require_rank4(b.shape(), "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()) +
                         " are not aligned");
    }
    const std::size_t n = a.dim(0);
    const std::size_t plane = a.dim(2) * a.dim(3);
    const std::size_t ca = a.dim(1) * plane;
    const std::size_t cb = b.dim(1) * plane;
    BasicTensor<T> out(Shape{n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        T* dst = out.raw() + i * (ca + cb);
        std::copy_n(a.raw() + i * ca, ca, dst);
        std::copy_n(b.raw() + i * cb, cb, dst + ca);
    }
    return out;
}

template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t count) {
    require_rank4(x.shape(), "slice_channels");
    if (begin + count > x.dim(1)) {
        throw ShapeError("slice_channels: range exceeds " + std::to_string(x.dim(1)) + " channels");
    }
    const std::size_t plane = x.dim(2) * x.dim(3);
    BasicTensor<T> out(Shape{x.dim(0), count, x.dim(2), x.dim(3)});
    for (std::size_t n = 0; n < x.dim(0); ++n) {
        std::copy_n(x.raw() + (n * x.dim(1) + begin) * plane, count * plane, out.raw() + n * count * plane);
    }
    return out;
}

template <class T>
bool all_finite(const BasicTensor<T>& x) {
    return std::all_of(x.data().begin(), x.data().end(), [](T v) { return std::isfinite(v); });
}

#define FASTDIFF_INSTANTIATE_OPS(T)                                                                           \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                \
    template BasicTensor<T> scale(const BasicTensor<T>&, double);                                             \
    template BasicTensor<T> add_scalar(const BasicTensor<T>&, double);                                        \
    template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                                        \
    template double sum(const BasicTensor<T>&);                                                               \
    template double mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, bool, bool);                 \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, Conv2dParams);               \
    template BasicTensor<T> conv2d_grad_input(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&,     \
                                              Conv2dParams);                                                  \
    template BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&,    \
                                               Conv2dParams);                                                 \
    template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template void add_bias_inplace(BasicTensor<T>&, const BasicTensor<T>&);                                   \
    template BasicTensor<T> bias_grad(const BasicTensor<T>&, const Shape&);                                   \
    template BasicTensor<T> silu(const BasicTensor<T>&);                                                      \
    template BasicTensor<T> silu_grad(const BasicTensor<T>&, const BasicTensor<T>&);                          \
    template BasicTensor<T> upsample_nearest2x(const BasicTensor<T>&);                                        \
    template BasicTensor<T> avgpool2x(const BasicTensor<T>&);                                                 \
    template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                    \
    template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);                  \
    template bool all_finite(const BasicTensor<T>&);

FASTDIFF_INSTANTIATE_OPS(float)
FASTDIFF_INSTANTIATE_OPS(double)

}  // namespace fastdiff
