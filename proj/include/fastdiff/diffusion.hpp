// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fastdiff/adam.hpp"
#include "fastdiff/denoiser.hpp"
#include "fastdiff/random.hpp"
#include "fastdiff/schedule.hpp"
#include "fastdiff/tensor.hpp"

namespace fastdiff {

/// alpha(i) * x0 + sigma(i) * eps.
template <class T>
BasicTensor<T> forward_sample(const BasicTensor<T>& x0, std::size_t i, const BasicTensor<T>& eps,
                              const BaseSchedule& base);

/// Same, for an explicit (alpha, sigma) pair.
template <class T>
BasicTensor<T> forward_sample(const BasicTensor<T>& x0, AlphaSigma p, const BasicTensor<T>& eps);

struct TrainBatch {
    Tensor x0;  // [B, C, H, W] in [-1, 1]
    Tensor c;   // [B, C', H, W] in [-1, 1]

    /// Throws ShapeError or std::invalid_argument.
    void validate() const;
    std::size_t size() const { return x0.rank() > 0 ? x0.dim(0) : 0; }
};

struct TrainStepResult {
    double loss = 0.0;
    /// Base steps drawn for each batch element.
    std::vector<std::size_t> steps;
};

/// One optimizer step on the mean-squared noise-prediction loss. Grid
/// positions are drawn per batch element from {1..S}, then eps ~ N(0, I).
/// A non-finite loss throws NumericError naming the stream seed.
TrainStepResult train_step(DenoiserNet<float>& net, const TrainBatch& batch, const StepGrid& grid,
                           AdamState<float>& opt, RandomSource& rs);

/// Deterministic update from (alpha, sigma) at t to (alpha', sigma') at the
/// previous grid point: (a'/a) x + (s' - (a'/a) s) eps_hat.
template <class T>
BasicTensor<T> ddim_step(const BasicTensor<T>& x_t, const BasicTensor<T>& eps_hat, AlphaSigma at, AlphaSigma prev);

/// Anything that predicts noise for a batch at one base step.
template <class T>
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual BasicTensor<T> predict(const BasicTensor<T>& x_t, const BasicTensor<T>& c, std::size_t step) const = 0;
};

template <class T>
class NetPredictor final : public NoisePredictor<T> {
public:
    explicit NetPredictor(const DenoiserNet<T>& net) : net_(&net) {}
    BasicTensor<T> predict(const BasicTensor<T>& x_t, const BasicTensor<T>& c, std::size_t step) const override {
        return forward(*net_, x_t, c, step);
    }

private:
    const DenoiserNet<T>* net_;
};

/// x0 ~ N(mean, scale^2) per pixel. A per-pixel mean, when present, has the
/// shape of a single latent and overrides the scalar.
struct GaussianDataSpec {
    double mean = 0.0;
    double scale = 1.0;
    std::optional<TensorD> mean_map;
};

/// E[eps | x_t] for Gaussian data: sigma (x_t - alpha mu) / (alpha^2 s^2 + sigma^2).
template <class T>
BasicTensor<T> analytic_eps_gaussian(const BasicTensor<T>& x_t, std::size_t i, const GaussianDataSpec& spec,
                                     const BaseSchedule& base);

template <class T>
BasicTensor<T> analytic_eps_gaussian(const BasicTensor<T>& x_t, AlphaSigma p, const GaussianDataSpec& spec);

template <class T>
class GaussianOraclePredictor final : public NoisePredictor<T> {
public:
    GaussianOraclePredictor(GaussianDataSpec spec, const BaseSchedule& base) : spec_(std::move(spec)), base_(&base) {}
    BasicTensor<T> predict(const BasicTensor<T>& x_t, const BasicTensor<T>&, std::size_t step) const override {
        return analytic_eps_gaussian(x_t, step, spec_, *base_);
    }

private:
    GaussianDataSpec spec_;
    const BaseSchedule* base_;
};

/// Forwards to another predictor and records every queried step.
template <class T>
class CountingPredictor final : public NoisePredictor<T> {
public:
    explicit CountingPredictor(const NoisePredictor<T>& inner) : inner_(&inner) {}
    BasicTensor<T> predict(const BasicTensor<T>& x_t, const BasicTensor<T>& c, std::size_t step) const override {
        steps_.push_back(step);
        return inner_->predict(x_t, c, step);
    }
    std::size_t calls() const noexcept { return steps_.size(); }
    const std::vector<std::size_t>& steps() const noexcept { return steps_; }

private:
    const NoisePredictor<T>* inner_;
    mutable std::vector<std::size_t> steps_;
};

enum class SamplerMode { Deterministic, Ancestral };

struct SamplerRun {
    std::uint64_t seed = 0;
    SamplerMode mode = SamplerMode::Deterministic;
    bool keep_trajectory = false;
};

template <class T>
struct SampleResult {
    BasicTensor<T> x0;
    /// Latents at grid positions S, S-1, ..., 0 when requested.
    std::vector<BasicTensor<T>> trajectory;
};

/// Starts from x ~ N(0, I) of `latent_shape` drawn from RandomSource(seed) and
/// walks grid positions S..1, calling the predictor exactly S times.
/// Ancestral mode adds posterior-variance noise on every step but the last.
template <class T>
SampleResult<T> sample(const NoisePredictor<T>& predictor, const BasicTensor<T>& c, const Shape& latent_shape,
                       const StepGrid& grid, const SamplerRun& run);

/// Exact output variance of the deterministic sampler driven by the
/// zero-mean unit-variance Gaussian oracle: prod_j (a_{j-1} a_j + s_{j-1} s_j)^2.
double analytic_final_variance(const StepGrid& grid);

/// Latent trajectory as consecutive FDT1 records preceded by a u32 count.
template <class T>
void write_trajectory(std::ostream& out, const std::vector<BasicTensor<T>>& trajectory);

}  // namespace fastdiff
