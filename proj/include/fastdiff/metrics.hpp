// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fastdiff/tensor.hpp"

namespace fastdiff {

/// Value written to CSV in place of an infinite PSNR.
inline constexpr double kPsnrCapDb = 100.0;

/// 20 log10(max_i / sqrt(MSE)); +infinity for identical inputs.
double psnr(const Tensor& x, const Tensor& xhat, double max_i = 1.0);

struct SsimOptions {
    std::size_t window = 7;
    double dynamic_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
    /// One statistic over the whole image instead of sliding windows.
    bool global = false;
};

/// Mean SSIM over all valid window positions (uniform weights, population
/// moments). Accepts [H,W] or [C,H,W]; channels are averaged.
double ssim(const Tensor& x, const Tensor& xhat, const SsimOptions& options = {});

/// Maps [-1, 1] to [0, 1].
Tensor denormalize(const Tensor& x);

struct ImageMetrics {
    std::string id;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

class MetricReport {
public:
    /// Scores normalized images after denormalizing both to [0, 1].
    void add(std::string id, const Tensor& target, const Tensor& prediction, const SsimOptions& options = {});
    void add(ImageMetrics m) { rows_.push_back(std::move(m)); }

    const std::vector<ImageMetrics>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }

    /// Summary statistics use capped PSNR values; std is the sample deviation.
    double mean_psnr() const;
    double std_psnr() const;
    double mean_ssim() const;
    double std_ssim() const;

    /// id,psnr_db,ssim rows followed by "mean" and "std" rows. Each preamble
    /// line is written first, prefixed with "# ".
    void write_csv(std::ostream& out, const std::vector<std::string>& preamble = {}) const;

private:
    std::vector<ImageMetrics> rows_;
};

}  // namespace fastdiff
