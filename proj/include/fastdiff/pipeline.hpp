// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastdiff/datasets.hpp"
#include "fastdiff/denoiser.hpp"
#include "fastdiff/diffusion.hpp"
#include "fastdiff/metrics.hpp"
#include "fastdiff/schedule.hpp"

namespace fastdiff {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Task { Denoise, SuperResolution, Translation, CustomDir };

std::string task_name(Task task);
Task parse_task(const std::string& name);

/// Flat key=value run configuration. Keys and defaults are listed by
/// RunConfig::keys(); unknown keys are errors.
struct RunConfig {
    Task task = Task::Denoise;

    // schedule
    std::size_t t_base = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::size_t steps = 10;
    SchedulerKind scheduler;

    // denoiser
    std::size_t base_width = 32;
    std::size_t levels = 3;
    std::size_t time_embed_dim = 64;
    std::size_t image_size = 32;

    // optimizer and training
    AdamOptions adam;
    std::size_t iterations = 20000;
    std::size_t batch_size = 8;
    std::size_t checkpoint_every = 1000;
    std::size_t log_every = 100;

    // data
    std::size_t n_images = 2000;
    std::size_t n_volumes = 200;
    std::size_t volume_depth = 10;
    std::size_t blob_count = 6;
    double blob_scale_min = 2.0;
    double blob_scale_max = 6.0;
    double depth_scale_min = 0.8;
    double depth_scale_max = 2.0;
    double dose_fraction = 0.1;
    double test_fraction = 0.05;
    std::size_t eval_images = 100;

    // seeds
    std::uint64_t seed = 0;
    std::uint64_t data_seed = 1;
    std::uint64_t split_seed = 2;
    std::uint64_t sample_seed = 3;

    SamplerMode sampler = SamplerMode::Deterministic;

    // paths
    std::filesystem::path dataset_dir;
    std::filesystem::path checkpoint_dir = "checkpoints";
    std::filesystem::path report_dir = "reports";

    /// Sets one key from its text value; throws ConfigError.
    void set(const std::string& key, const std::string& value);

    /// Canonical "key=value" lines for every key, in keys() order.
    std::string to_text() const;

    /// 16 hex digits of FNV-1a over to_text() without the output directories.
    std::string hash() const;

    /// Throws ConfigError on inconsistent values.
    void validate() const;

    static const std::vector<std::string>& keys();
};

/// Parses key=value lines; '#' starts a comment. Later keys override earlier ones.
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

std::shared_ptr<const BaseSchedule> make_base(const RunConfig& config);
StepGrid make_grid(const RunConfig& config);

/// The task's dataset: synthetic tasks are generated from data_seed, custom-dir is loaded.
Dataset make_dataset(const RunConfig& config);

struct DataSplit {
    Dataset train;
    Dataset test;
};
DataSplit make_split(const RunConfig& config);

DenoiserConfig denoiser_config(const RunConfig& config, const Dataset& data);

/// Naive prediction from the condition: the mean of condition channels when
/// the target has one channel (neighbor average for SR, identity otherwise).
Tensor baseline_prediction(const Tensor& condition, std::size_t target_channels);

struct TrainOptions {
    /// Checkpoint written every checkpoint_every iterations and at the end; empty disables.
    std::filesystem::path checkpoint_path;
    /// CSV "iteration,loss"; empty disables. Appended to when resuming.
    std::filesystem::path loss_csv;
    /// Stop after this iteration count instead of config.iterations (for tests).
    std::optional<std::size_t> stop_at;
    std::function<void(std::size_t iteration, double loss)> on_log;
};

/// Trains from scratch or continues `resume`. Iteration k draws its batch and
/// noise from RandomSource(seed).split(k), so a resumed run reproduces an
/// uninterrupted one bit for bit.
Checkpoint train(const RunConfig& config, const Dataset& train_set, const StepGrid& grid,
                 std::optional<Checkpoint> resume = std::nullopt, const TrainOptions& options = {});

struct EvalResult {
    MetricReport model;
    MetricReport baseline;
    double sample_seconds_per_image = 0.0;
    std::vector<double> sample_seconds;  // wall clock per evaluated image
    std::size_t denoiser_calls_per_image = 0;
    std::vector<Tensor> predictions;  // [C,H,W] per evaluated image
};

/// Samples each of the first eval_images test items with seed
/// RandomSource(sample_seed).split(index) and scores it against the target.
EvalResult evaluate(const RunConfig& config, const DenoiserNet<float>& net, const StepGrid& grid,
                    const Dataset& test_set, bool keep_predictions = false);

/// Worker count: hardware concurrency capped by FASTDIFF_THREADS when set.
std::size_t worker_count();

struct BenchRow {
    std::size_t steps = 0;
    std::string scheduler;
    std::vector<std::size_t> indices;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double baseline_psnr_db = 0.0;
    double baseline_ssim = 0.0;
    double train_seconds = 0.0;
    double sample_ms_per_image = 0.0;
};

/// Checkpoint used by run_bench_case, keyed by step count, grid kind and config hash.
std::filesystem::path bench_checkpoint_path(const RunConfig& config);

/// Trains (or reuses a finished checkpoint from checkpoint_dir) and evaluates one grid.
BenchRow run_bench_case(const RunConfig& config, const DataSplit& data, std::ostream* log = nullptr);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows, const RunConfig& config);

struct OracleCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Gaussian-data sampler audit and schedule invariants; no training.
std::vector<OracleCheck> run_oracle(const RunConfig& config, std::size_t samples = 10000);

struct SamplerAudit {
    /// Sample variance of the sampler outputs.
    double empirical = 0.0;
    /// Sample variance of the prior draws that produced them.
    double prior = 0.0;
    /// analytic_final_variance of the grid.
    double analytic = 0.0;
};

/// Runs the deterministic sampler driven by the zero-mean unit-variance
/// Gaussian oracle over `samples` scalar runs.
SamplerAudit oracle_sampler_audit(const StepGrid& grid, std::size_t samples, std::uint64_t seed);

}  // namespace fastdiff
