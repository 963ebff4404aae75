// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace fastdiff {

void SyntheticVolumeSpec::validate() const {
    if (height < 8 || width < 8) {
        throw std::invalid_argument("synthetic image extents must be at least 8, got " + std::to_string(height) +
                                    "x" + std::to_string(width));
    }
    if (blob_count < 1) {
        throw std::invalid_argument("blob_count must be at least 1");
    }
    if (!(blob_scale_min > 0.0) || blob_scale_max < blob_scale_min) {
        throw std::invalid_argument("blob scale range must satisfy 0 < min <= max");
    }
    if (!(depth_scale_min > 0.0) || depth_scale_max < depth_scale_min) {
        throw std::invalid_argument("depth scale range must satisfy 0 < min <= max");
    }
    if (!(intensity_min > 0.0) || intensity_max < intensity_min) {
        throw std::invalid_argument("intensity range must satisfy 0 < min <= max");
    }
}

namespace {

void check_range(const Tensor& t, const std::string& id, const char* what) {
    for (float v : t.data()) {
        if (!(v >= -1.0f && v <= 1.0f)) {
            throw std::invalid_argument("sample " + id + ": " + what + " value " + std::to_string(v) +
                                        " outside [-1, 1]");
        }
    }
}

std::string make_id(const char* prefix, std::size_t a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05zu", prefix, a);
    return buf;
}

struct Blob {
    double cz, cy, cx;
    double sz, sy, sx;
    double amplitude;
};

std::vector<Blob> draw_blobs(const SyntheticVolumeSpec& spec, std::size_t depth, RandomSource& rs) {
    std::vector<Blob> blobs(spec.blob_count);
    for (auto& b : blobs) {
        b.cz = rs.uniform(0.0, static_cast<double>(depth));
        b.cy = rs.uniform(0.0, static_cast<double>(spec.height));
        b.cx = rs.uniform(0.0, static_cast<double>(spec.width));
        b.sz = rs.uniform(spec.depth_scale_min, spec.depth_scale_max);
        b.sy = rs.uniform(spec.blob_scale_min, spec.blob_scale_max);
        b.sx = rs.uniform(spec.blob_scale_min, spec.blob_scale_max);
        b.amplitude = rs.uniform(spec.intensity_min, spec.intensity_max);
    }
    return blobs;
}

// Blob composite scaled so its maximum is 1; values in [0, 1], layout [D,H,W].
std::vector<double> render(const SyntheticVolumeSpec& spec, std::size_t depth, const std::vector<Blob>& blobs) {
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    std::vector<double> v(depth * h * w, 0.0);
    std::vector<double> gy(h);
    std::vector<double> gx(w);
    for (const auto& b : blobs) {
        for (std::size_t y = 0; y < h; ++y) {
            const double d = (static_cast<double>(y) - b.cy) / b.sy;
            gy[y] = std::exp(-0.5 * d * d);
        }
        for (std::size_t x = 0; x < w; ++x) {
            const double d = (static_cast<double>(x) - b.cx) / b.sx;
            gx[x] = std::exp(-0.5 * d * d);
        }
        for (std::size_t z = 0; z < depth; ++z) {
            const double dz = depth > 1 ? (static_cast<double>(z) - b.cz) / b.sz : 0.0;
            const double az = b.amplitude * std::exp(-0.5 * dz * dz);
            double* plane = v.data() + z * h * w;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    plane[y * w + x] += az * gy[y] * gx[x];
                }
            }
        }
    }
    const double peak = *std::max_element(v.begin(), v.end());
    if (peak > 0.0) {
        for (auto& x : v) {
            x /= peak;
        }
    }
    return v;
}

Tensor to_normalized(const double* unit, std::size_t h, std::size_t w) {
    Tensor t(Shape{1, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        t[i] = static_cast<float>(std::clamp(2.0 * unit[i] - 1.0, -1.0, 1.0));
    }
    return t;
}

Tensor clamp_unit(Tensor t) {
    for (auto& v : t.data()) {
        v = std::clamp(v, -1.0f, 1.0f);
    }
    return t;
}

}  // namespace

void Dataset::add(PairSample sample) {
    if (sample.x0.rank() != 3 || sample.c.rank() != 3) {
        throw ShapeError("sample " + sample.id + ": tensors must be [C,H,W], got " +
                         shape_to_string(sample.x0.shape()) + " and " + shape_to_string(sample.c.shape()));
    }
    if (sample.x0.dim(1) != sample.c.dim(1) || sample.x0.dim(2) != sample.c.dim(2)) {
        throw ShapeError("sample " + sample.id + ": target " + shape_to_string(sample.x0.shape()) +
                         " and condition " + shape_to_string(sample.c.shape()) + " are not aligned");
    }
    if (!samples_.empty() &&
        (sample.x0.shape() != target_shape() || sample.c.shape() != cond_shape())) {
        throw ShapeError("sample " + sample.id + " has shapes " + shape_to_string(sample.x0.shape()) + "/" +
                         shape_to_string(sample.c.shape()) + ", dataset holds " + shape_to_string(target_shape()) +
                         "/" + shape_to_string(cond_shape()));
    }
    check_range(sample.x0, sample.id, "target");
    check_range(sample.c, sample.id, "condition");
    if (!ids_.insert(sample.id).second) {
        throw std::invalid_argument("duplicate sample id " + sample.id);
    }
    samples_.push_back(std::move(sample));
}

const Shape& Dataset::target_shape() const {
    if (samples_.empty()) {
        throw std::logic_error("target_shape() of an empty dataset");
    }
    return samples_.front().x0.shape();
}

const Shape& Dataset::cond_shape() const {
    if (samples_.empty()) {
        throw std::logic_error("cond_shape() of an empty dataset");
    }
    return samples_.front().c.shape();
}

TrainBatch Dataset::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) {
        throw std::invalid_argument("batch: no indices");
    }
    const auto& ts = target_shape();
    const auto& cs = cond_shape();
    TrainBatch b{Tensor(Shape{indices.size(), ts[0], ts[1], ts[2]}), Tensor(Shape{indices.size(), cs[0], cs[1], cs[2]})};
    const std::size_t nt = shape_size(ts);
    const std::size_t nc = shape_size(cs);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto& s = samples_.at(indices[k]);
        std::copy_n(s.x0.raw(), nt, b.x0.raw() + k * nt);
        std::copy_n(s.c.raw(), nc, b.c.raw() + k * nc);
    }
    return b;
}

Dataset gen_sr_triplets(const SyntheticVolumeSpec& spec, std::size_t n_volumes) {
    spec.validate();
    if (spec.depth < 3) {
        throw std::invalid_argument("gen_sr_triplets: depth must be at least 3, got " + std::to_string(spec.depth));
    }
    const RandomSource root(spec.seed);
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    const std::size_t plane = h * w;
    Dataset out;
    for (std::size_t v = 0; v < n_volumes; ++v) {
        auto rs = root.split(v);
        const auto vol = render(spec, spec.depth, draw_blobs(spec, spec.depth, rs));
        for (std::size_t k = 1; k + 1 < spec.depth; ++k) {
            Tensor c(Shape{2, h, w});
            const Tensor below = to_normalized(vol.data() + (k - 1) * plane, h, w);
            const Tensor above = to_normalized(vol.data() + (k + 1) * plane, h, w);
            std::copy_n(below.raw(), plane, c.raw());
            std::copy_n(above.raw(), plane, c.raw() + plane);
            char id[64];
            std::snprintf(id, sizeof id, "sr_v%04zu_s%03zu", v, k);
            out.add({to_normalized(vol.data() + k * plane, h, w), std::move(c), id});
        }
    }
    return out;
}

double low_dose_sigma(double p, double dose_fraction) {
    if (!(dose_fraction > 0.0 && dose_fraction <= 1.0)) {
        throw std::invalid_argument("dose fraction must lie in (0, 1], got " + std::to_string(dose_fraction));
    }
    const double level = std::sqrt((1.0 - dose_fraction) / (9.0 * dose_fraction));
    const double signal = std::max(p + 1.0, 0.0) / 2.0;
    return level * std::sqrt(0.15 * 0.15 + 0.05 * 0.05 * signal);
}

Tensor add_low_dose_noise(const Tensor& clean, double dose_fraction, RandomSource& rs) {
    const double level = low_dose_sigma(-1.0, dose_fraction) / 0.15;
    Tensor out(clean.shape());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double p = clean[i];
        const double g1 = rs.normal();
        const double g2 = rs.normal();
        const double n = 0.15 * g1 + 0.05 * std::sqrt(std::max(p + 1.0, 0.0) / 2.0) * g2;
        out[i] = static_cast<float>(p + level * n);
    }
    return out;
}

Dataset gen_denoise_pairs(const SyntheticVolumeSpec& spec, std::size_t n_images, double dose_fraction) {
    spec.validate();
    low_dose_sigma(0.0, dose_fraction);
    const RandomSource root(spec.seed);
    Dataset out;
    for (std::size_t k = 0; k < n_images; ++k) {
        auto rs = root.split(k);
        const auto img = render(spec, 1, draw_blobs(spec, 1, rs));
        Tensor clean = to_normalized(img.data(), spec.height, spec.width);
        Tensor cond = clamp_unit(add_low_dose_noise(clean, dose_fraction, rs));
        out.add({std::move(clean), std::move(cond), make_id("dn", k)});
    }
    return out;
}

Dataset gen_translation_pairs(const SyntheticVolumeSpec& spec, std::size_t n_images) {
    spec.validate();
    const RandomSource root(spec.seed);
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    Dataset out;
    for (std::size_t k = 0; k < n_images; ++k) {
        auto rs = root.split(k);
        const auto s = render(spec, 1, draw_blobs(spec, 1, rs));
        // one oriented stripe texture per modality
        double freq[2][2];
        double phase[2];
        for (int m = 0; m < 2; ++m) {
            const double angle = rs.uniform(0.0, std::numbers::pi);
            const double period = rs.uniform(3.0, 8.0);
            freq[m][0] = std::cos(angle) / period;
            freq[m][1] = std::sin(angle) / period;
            phase[m] = rs.uniform(0.0, two_pi);
        }
        Tensor a(Shape{1, h, w});
        Tensor b(Shape{1, h, w});
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t i = y * w + x;
                const double u = s[i];
                const double ta = std::sin(two_pi * (freq[0][0] * x + freq[0][1] * y) + phase[0]);
                const double tb = std::sin(two_pi * (freq[1][0] * x + freq[1][1] * y) + phase[1]);
                const double va = std::pow(u, 0.6) + 0.04 * ta * u;
                const double vb = 1.0 - (1.0 - u) * (1.0 - u) + 0.04 * tb * u;
                a[i] = static_cast<float>(std::clamp(2.0 * va - 1.0, -1.0, 1.0));
                b[i] = static_cast<float>(std::clamp(2.0 * vb - 1.0, -1.0, 1.0));
            }
        }
        out.add({std::move(b), std::move(a), make_id("tr", k)});
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("test_fraction must lie in [0, 1), got " + std::to_string(test_fraction));
    }
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    RandomSource rs(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rs.below(i)]);
    }
    const auto n_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(dataset.size())));
    Dataset train;
    Dataset test;
    for (std::size_t k = 0; k < order.size(); ++k) {
        (k < n_test ? test : train).add(dataset[order[k]]);
    }
    return {std::move(train), std::move(test)};
}

}  // namespace fastdiff
