// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace fastdiff {

double psnr(const Tensor& x, const Tensor& xhat, double max_i) {
    if (x.shape() != xhat.shape()) {
        throw ShapeError("psnr: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(xhat.shape()));
    }
    if (!(max_i > 0.0)) {
        throw std::invalid_argument("psnr: max_i must be positive");
    }
    if (x.empty()) {
        throw ShapeError("psnr: empty images");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(xhat[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(x.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 20.0 * std::log10(max_i / std::sqrt(mse));
}

namespace {

double ssim_terms(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
    return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

// Summed-area table with a zero first row and column: (h+1) x (w+1).
std::vector<double> integral(const double* a, const double* b, std::size_t h, std::size_t w) {
    std::vector<double> s((h + 1) * (w + 1), 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        double row = 0.0;
        for (std::size_t x = 0; x < w; ++x) {
            row += a[y * w + x] * (b != nullptr ? b[y * w + x] : 1.0);
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    return s;
}

double box(const std::vector<double>& s, std::size_t w, std::size_t y, std::size_t x, std::size_t k) {
    const std::size_t stride = w + 1;
    return s[(y + k) * stride + x + k] - s[y * stride + x + k] - s[(y + k) * stride + x] + s[y * stride + x];
}

double ssim_plane(const double* a, const double* b, std::size_t h, std::size_t w, const SsimOptions& o) {
    const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
    const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
    if (o.global) {
        const double n = static_cast<double>(h * w);
        double sa = 0, sb = 0;
        for (std::size_t i = 0; i < h * w; ++i) {
            sa += a[i];
            sb += b[i];
        }
        const double ma = sa / n;
        const double mb = sb / n;
        double vaa = 0, vbb = 0, vab = 0;
        for (std::size_t i = 0; i < h * w; ++i) {
            vaa += (a[i] - ma) * (a[i] - ma);
            vbb += (b[i] - mb) * (b[i] - mb);
            vab += (a[i] - ma) * (b[i] - mb);
        }
        return ssim_terms(ma, mb, vaa / n, vbb / n, vab / n, c1, c2);
    }
    const std::size_t k = o.window;
    const auto sa = integral(a, nullptr, h, w);
    const auto sb = integral(b, nullptr, h, w);
    const auto saa = integral(a, a, h, w);
    const auto sbb = integral(b, b, h, w);
    const auto sab = integral(a, b, h, w);
    const double n = static_cast<double>(k * k);
    double total = 0.0;
    for (std::size_t y = 0; y + k <= h; ++y) {
        for (std::size_t x = 0; x + k <= w; ++x) {
            const double ma = box(sa, w, y, x, k) / n;
            const double mb = box(sb, w, y, x, k) / n;
            const double vaa = box(saa, w, y, x, k) / n - ma * ma;
            const double vbb = box(sbb, w, y, x, k) / n - mb * mb;
            const double vab = box(sab, w, y, x, k) / n - ma * mb;
            total += ssim_terms(ma, mb, vaa, vbb, vab, c1, c2);
        }
    }
    return total / static_cast<double>((h - k + 1) * (w - k + 1));
}

}  // namespace

double ssim(const Tensor& x, const Tensor& xhat, const SsimOptions& options) {
    if (x.shape() != xhat.shape()) {
        throw ShapeError("ssim: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(xhat.shape()));
    }
    if (x.rank() != 2 && x.rank() != 3) {
        throw ShapeError("ssim: expected [H,W] or [C,H,W], got " + shape_to_string(x.shape()));
    }
    const std::size_t channels = x.rank() == 3 ? x.dim(0) : 1;
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    if (!options.global && (options.window % 2 == 0 || options.window == 0 || options.window > std::min(h, w))) {
        throw std::invalid_argument("ssim: window " + std::to_string(options.window) +
                                    " must be odd and at most the smaller image extent " +
                                    std::to_string(std::min(h, w)));
    }
    if (!(options.dynamic_range > 0.0)) {
        throw std::invalid_argument("ssim: dynamic range must be positive");
    }
    std::vector<double> a(h * w);
    std::vector<double> b(h * w);
    double total = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < h * w; ++i) {
            a[i] = x[c * h * w + i];
            b[i] = xhat[c * h * w + i];
        }
        total += ssim_plane(a.data(), b.data(), h, w, options);
    }
    return total / static_cast<double>(channels);
}

Tensor denormalize(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] + 1.0f) * 0.5f;
    }
    return out;
}

void MetricReport::add(std::string id, const Tensor& target, const Tensor& prediction, const SsimOptions& options) {
    const Tensor t = denormalize(target);
    const Tensor p = denormalize(prediction);
    rows_.push_back({std::move(id), psnr(t, p, 1.0), ssim(t, p, options)});
}

namespace {

double capped(double db) { return std::min(db, kPsnrCapDb); }

template <class F>
std::pair<double, double> moments(const std::vector<ImageMetrics>& rows, F value) {
    if (rows.empty()) {
        return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    double sum = 0.0;
    for (const auto& r : rows) {
        sum += value(r);
    }
    const double mean = sum / static_cast<double>(rows.size());
    if (rows.size() < 2) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (const auto& r : rows) {
        ss += (value(r) - mean) * (value(r) - mean);
    }
    return {mean, std::sqrt(ss / static_cast<double>(rows.size() - 1))};
}

}  // namespace

double MetricReport::mean_psnr() const {
    return moments(rows_, [](const ImageMetrics& m) { return capped(m.psnr_db); }).first;
}
double MetricReport::std_psnr() const {
    return moments(rows_, [](const ImageMetrics& m) { return capped(m.psnr_db); }).second;
}
double MetricReport::mean_ssim() const {
    return moments(rows_, [](const ImageMetrics& m) { return m.ssim; }).first;
}
double MetricReport::std_ssim() const {
    return moments(rows_, [](const ImageMetrics& m) { return m.ssim; }).second;
}

void MetricReport::write_csv(std::ostream& out, const std::vector<std::string>& preamble) const {
    for (const auto& line : preamble) {
        out << "# " << line << '\n';
    }
    out << "id,psnr_db,ssim\n";
    char buf[128];
    for (const auto& r : rows_) {
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", capped(r.psnr_db), r.ssim);
        out << r.id << buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f\n", mean_psnr(), mean_ssim());
    out << buf;
    std::snprintf(buf, sizeof buf, "std,%.6f,%.6f\n", std_psnr(), std_ssim());
    out << buf;
}

}  // namespace fastdiff
