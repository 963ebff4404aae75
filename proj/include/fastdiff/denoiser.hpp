// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastdiff/adam.hpp"
#include "fastdiff/autodiff.hpp"
#include "fastdiff/random.hpp"
#include "fastdiff/schedule.hpp"
#include "fastdiff/tensor.hpp"

namespace fastdiff {

struct DenoiserConfig {
    std::size_t target_channels = 1;
    std::size_t cond_channels = 1;
    std::size_t base_width = 32;
    /// Resolution levels; level l runs at image_size / 2^l with base_width * 2^l channels.
    std::size_t levels = 3;
    std::size_t time_embed_dim = 64;
    std::size_t image_size = 32;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    std::size_t channels_at(std::size_t level) const { return base_width << level; }

    bool operator==(const DenoiserConfig&) const = default;
};

/// Sinusoidal embedding of a base-step index: out[2k] = sin(i w_k),
/// out[2k+1] = cos(i w_k), w_k = 10000^(-2k/d). d must be even.
std::vector<double> time_embed(std::size_t step, std::size_t dim);

/// Conditional noise predictor eps(x_t, c, i): a small U-Net with residual
/// blocks (SiLU, no normalization), skip connections per level and a
/// per-block projection of the time embedding added as a channel bias.
/// The condition enters by channel concatenation with x_t.
template <class T>
class DenoiserNet {
public:
    /// All parameters zero; see init() for the random initialization.
    explicit DenoiserNet(DenoiserConfig config);

    static DenoiserNet init(const DenoiserConfig& config, RandomSource& rs);

    const DenoiserConfig& config() const noexcept { return config_; }

    std::span<BasicTensor<T>> parameters() noexcept { return params_; }
    std::span<const BasicTensor<T>> parameters() const noexcept { return params_; }
    const std::vector<std::string>& parameter_names() const noexcept { return names_; }

    /// Index of a named parameter; throws std::out_of_range when absent.
    std::size_t parameter_index(const std::string& name) const;

    /// Total scalar parameter count.
    std::size_t parameter_count() const;

    /// Parameter leaves on `g`, in parameters() order.
    std::vector<Var<T>> bind(Graph<T>& g) const;

    /// x_t [N,Cx,H,W], c [N,Cc,H,W], one base step per batch element.
    Var<T> forward(Graph<T>& g, std::span<const Var<T>> params, Var<T> x_t, Var<T> c,
                   std::span<const std::size_t> steps) const;

    /// Inference-only forward pass.
    BasicTensor<T> predict(const BasicTensor<T>& x_t, const BasicTensor<T>& c,
                           std::span<const std::size_t> steps) const;

    template <class U>
    DenoiserNet<U> cast() const {
        DenoiserNet<U> out(config_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            out.parameters()[k] = params_[k].template cast<U>();
        }
        return out;
    }

private:
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

    struct ResBlockSlots {
        std::size_t conv1_w, conv1_b, time_w, time_b, conv2_w, conv2_b;
        std::size_t skip_w = kNone, skip_b = kNone;
    };

    std::size_t add_param(std::string name, Shape shape);
    ResBlockSlots add_res_block(const std::string& prefix, std::size_t in, std::size_t out);
    Var<T> res_block(const ResBlockSlots& s, std::span<const Var<T>> p, Var<T> h, Var<T> time) const;
    void check_inputs(const Shape& x, const Shape& c, std::size_t n_steps) const;

    DenoiserConfig config_;
    std::size_t time_fc1_w_, time_fc1_b_, time_fc2_w_, time_fc2_b_;
    std::size_t in_w_, in_b_, out_w_, out_b_;
    std::vector<ResBlockSlots> encoder_;  // two per level
    std::vector<ResBlockSlots> decoder_;  // two per level below the bottom, deepest first
    std::vector<BasicTensor<T>> params_;
    std::vector<std::string> names_;
};

/// Shorthand for a single shared step over the whole batch.
template <class T>
BasicTensor<T> forward(const DenoiserNet<T>& net, const BasicTensor<T>& x_t, const BasicTensor<T>& c,
                       std::size_t step) {
    std::vector<std::size_t> steps(x_t.rank() > 0 ? x_t.dim(0) : 1, step);
    return net.predict(x_t, c, steps);
}

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Schedule and grid a model was trained on.
struct GridDescription {
    std::size_t t_base = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    SchedulerKind kind;
    std::vector<std::size_t> indices;

    static GridDescription of(const StepGrid& grid);
    StepGrid rebuild() const;
    bool operator==(const GridDescription&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// File layout (little-endian):
//   "FDPM" | u32 version | config (6 x u32) | u32 count | count x (name, FDT1 record)
//   | grid | u64 iteration | u64 seed | u8 has_optimizer | [ADAM block]
struct Checkpoint {
    DenoiserNet<float> net{DenoiserConfig{}};
    GridDescription grid;
    std::uint64_t iteration = 0;
    std::uint64_t seed = 0;
    std::optional<AdamState<float>> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fastdiff
