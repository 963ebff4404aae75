// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fastdiff {

class ScheduleError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct AlphaSigma {
    double alpha = 1.0;
    double sigma = 0.0;
};

/// Dense linear-beta schedule over base steps 1..T.
///
/// beta(i) = beta_start + (beta_end - beta_start) * i / T, and
/// alpha_sq(i) = prod_{j<=i} (1 - beta(j)) with alpha_sq(0) = 1.
/// All arithmetic is double precision.
class BaseSchedule {
public:
    BaseSchedule(std::size_t t_base, double beta_start, double beta_end);

    std::size_t t_base() const noexcept { return t_base_; }
    double beta_start() const noexcept { return beta_start_; }
    double beta_end() const noexcept { return beta_end_; }

    /// beta at base step i, 1 <= i <= T.
    double beta(std::size_t i) const;
    /// Cumulative alpha^2 at base step i, 0 <= i <= T.
    double alpha_sq(std::size_t i) const;
    /// (alpha, sigma) at base step i with alpha^2 + sigma^2 = 1.
    AlphaSigma alpha_sigma(std::size_t i) const;
    /// alpha^2 / sigma^2 at base step i >= 1. Throws at i = 0 where it diverges.
    double snr(std::size_t i) const;

private:
    std::size_t t_base_;
    double beta_start_;
    double beta_end_;
    std::vector<double> beta_;      // index 0 unused
    std::vector<double> alpha_sq_;  // index 0 holds 1
};

BaseSchedule build_base(std::size_t t_base = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// alpha/sigma/snr as free functions over a base schedule.
inline AlphaSigma alpha_sigma(const BaseSchedule& base, std::size_t i) { return base.alpha_sigma(i); }
inline double snr(const BaseSchedule& base, std::size_t i) { return base.snr(i); }

struct SchedulerKind {
    enum class Placement { Uniform, NonUniform };

    Placement placement = Placement::Uniform;
    /// Base step splitting early from late steps (NonUniform only). Zero
    /// selects round(0.699 * T).
    std::size_t boundary_index = 0;
    /// Share of grid steps placed above the boundary (NonUniform only).
    double late_fraction = 0.6;

    static SchedulerKind uniform() { return {}; }
    static SchedulerKind non_uniform(std::size_t boundary = 0, double late_fraction = 0.6) {
        return {Placement::NonUniform, boundary, late_fraction};
    }

    /// Boundary resolved against a base step count.
    std::size_t resolved_boundary(std::size_t t_base) const;

    std::string name() const;

    bool operator==(const SchedulerKind&) const = default;
};

SchedulerKind parse_scheduler_kind(const std::string& name);

/// Few-step grid: positions 0..S, where position 0 is the noise-free point
/// (alpha, sigma) = (1, 0) and positions 1..S map to ascending base steps
/// ending at T.
class StepGrid {
public:
    StepGrid(std::shared_ptr<const BaseSchedule> base, std::vector<std::size_t> indices, SchedulerKind kind);

    const BaseSchedule& base() const noexcept { return *base_; }
    std::shared_ptr<const BaseSchedule> base_ptr() const noexcept { return base_; }
    const SchedulerKind& kind() const noexcept { return kind_; }

    /// S, the number of noisy grid points.
    std::size_t steps() const noexcept { return indices_.size(); }

    /// Base step at grid position j (0 at j = 0).
    std::size_t base_index(std::size_t position) const;

    /// Base steps at positions 1..S.
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }

    AlphaSigma point(std::size_t position) const;

    bool contains(std::size_t base_step) const;

private:
    std::shared_ptr<const BaseSchedule> base_;
    std::vector<std::size_t> indices_;
    std::vector<AlphaSigma> points_;  // positions 0..S
    SchedulerKind kind_;
};

/// Uniform: i_j = round(j T / S). NonUniform: n_late = round(f S) steps of
/// boundary + round(j (T - boundary) / n_late), and n_early = S - n_late steps
/// of round(j boundary / n_early). Rounding collisions are an error.
StepGrid subsample(std::shared_ptr<const BaseSchedule> base, std::size_t s_steps, SchedulerKind kind);

/// CSV with columns grid_pos,base_index,t,alpha,sigma,snr (6 significant
/// digits). The snr cell at position 0 is "inf".
void write_grid_csv(std::ostream& out, const StepGrid& grid);

}  // namespace fastdiff
