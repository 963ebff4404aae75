// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fastdiff/diffusion.hpp"
#include "fastdiff/random.hpp"
#include "fastdiff/tensor.hpp"

namespace fastdiff {

/// One example: target x0 [C,H,W] and condition stack c [C',H,W], both in [-1, 1].
struct PairSample {
    Tensor x0;
    Tensor c;
    std::string id;

    bool operator==(const PairSample&) const = default;
};

/// Random Gaussian-blob volumes. Scales are blob standard deviations in
/// pixels; intensities are per-blob amplitudes before normalization.
struct SyntheticVolumeSpec {
    std::size_t depth = 10;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t blob_count = 6;
    double blob_scale_min = 2.0;
    double blob_scale_max = 6.0;
    /// Blob standard deviation along depth, in slices.
    double depth_scale_min = 0.8;
    double depth_scale_max = 2.0;
    double intensity_min = 0.3;
    double intensity_max = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Ordered collection of samples with consistent shapes.
class Dataset {
public:
    Dataset() = default;

    /// Throws ShapeError on inconsistent shapes, std::invalid_argument on
    /// out-of-range values or a duplicate id.
    void add(PairSample sample);

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const PairSample& operator[](std::size_t i) const { return samples_.at(i); }
    const std::vector<PairSample>& samples() const noexcept { return samples_; }

    /// [C,H,W] of targets and conditions; throws when empty.
    const Shape& target_shape() const;
    const Shape& cond_shape() const;

    /// Stacks the selected samples into a [B,...] batch.
    TrainBatch batch(std::span<const std::size_t> indices) const;

    bool operator==(const Dataset& other) const { return samples_ == other.samples_; }

private:
    std::vector<PairSample> samples_;
    std::unordered_set<std::string> ids_;
};

/// Each volume yields depth - 2 triplets: condition (slice k-1, slice k+1), target slice k.
Dataset gen_sr_triplets(const SyntheticVolumeSpec& spec, std::size_t n_volumes);

/// Clean blob images paired with low-dose corrupted copies (see low_dose_sigma).
Dataset gen_denoise_pairs(const SyntheticVolumeSpec& spec, std::size_t n_images, double dose_fraction);

/// A shared structure rendered through two monotone transfer curves plus
/// modality-specific texture; condition is modality A, target modality B.
Dataset gen_translation_pairs(const SyntheticVolumeSpec& spec, std::size_t n_images);

/// Per-pixel noise standard deviation of the low-dose model at normalized
/// intensity p: sqrt((1-d)/(9d)) * sqrt(0.15^2 + 0.05^2 max(p+1, 0)/2).
double low_dose_sigma(double p, double dose_fraction);

/// Adds low-dose noise to a clean image in normalized units, without clamping.
Tensor add_low_dose_noise(const Tensor& clean, double dose_fraction, RandomSource& rs);

/// Deterministic shuffle, then the first round(test_fraction * n) samples form the test set.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

class DatasetError : public std::runtime_error {
public:
    explicit DatasetError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Grayscale image with its stored bit depth; values normalized to [-1, 1].
struct GrayImage {
    Tensor pixels;  // [H, W]
    int bit_depth = 16;
};

/// Binary PGM (P5), 8- or 16-bit.
GrayImage read_pgm(const std::filesystem::path& path);
/// Writes 16-bit P5 from values in [-1, 1].
void write_pgm(const std::filesystem::path& path, const Tensor& pixels);

/// 8- or 16-bit grayscale PNG.
GrayImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor& pixels);

/// Dispatches on the extension (.pgm or .png).
GrayImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& pixels);

/// Bilinear resize of an [H, W] image (half-pixel centers).
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Directory layout:
//   <root>/manifest.txt            one id per line, in iteration order
//   <root>/target/<id>.pgm         single-channel target, or target_0/, target_1/, ...
//   <root>/cond/<id>.pgm           single-channel condition, or cond_0/, cond_1/, ...
// Files may be .pgm or .png.
struct ImageDirLayout {
    /// Resize to image_size x image_size when nonzero.
    std::size_t image_size = 0;
};

/// Loads a paired directory; every problem found is reported in one DatasetError.
Dataset load_image_dir(const std::filesystem::path& root, const ImageDirLayout& layout = {});

/// Writes the layout above with 16-bit PGM files.
void save_dataset(const std::filesystem::path& root, const Dataset& dataset);

}  // namespace fastdiff
