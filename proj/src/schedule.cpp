// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace fastdiff {

BaseSchedule::BaseSchedule(std::size_t t_base, double beta_start, double beta_end)
    : t_base_(t_base), beta_start_(beta_start), beta_end_(beta_end) {
    if (t_base < 2) {
        throw ScheduleError("t_base must be at least 2, got " + std::to_string(t_base));
    }
    if (!(beta_start > 0.0) || !(beta_start < beta_end) || !(beta_end < 1.0)) {
        throw ScheduleError("beta endpoints must satisfy 0 < beta_start < beta_end < 1, got " +
                            std::to_string(beta_start) + ", " + std::to_string(beta_end));
    }
    beta_.assign(t_base + 1, 0.0);
    alpha_sq_.assign(t_base + 1, 1.0);
    const double span = beta_end - beta_start;
    for (std::size_t i = 1; i <= t_base; ++i) {
        beta_[i] = beta_start + span * (static_cast<double>(i) / static_cast<double>(t_base));
        alpha_sq_[i] = alpha_sq_[i - 1] * (1.0 - beta_[i]);
    }
}

double BaseSchedule::beta(std::size_t i) const {
    if (i == 0 || i > t_base_) {
        throw ScheduleError("beta index " + std::to_string(i) + " outside [1, " + std::to_string(t_base_) + "]");
    }
    return beta_[i];
}

double BaseSchedule::alpha_sq(std::size_t i) const {
    if (i > t_base_) {
        throw ScheduleError("step index " + std::to_string(i) + " outside [0, " + std::to_string(t_base_) + "]");
    }
    return alpha_sq_[i];
}

AlphaSigma BaseSchedule::alpha_sigma(std::size_t i) const {
    const double a2 = alpha_sq(i);
    return {std::sqrt(a2), std::sqrt(1.0 - a2)};
}

double BaseSchedule::snr(std::size_t i) const {
    if (i == 0) {
        throw ScheduleError("snr diverges at step 0 (sigma = 0)");
    }
    const double a2 = alpha_sq(i);
    return a2 / (1.0 - a2);
}

BaseSchedule build_base(std::size_t t_base, double beta_start, double beta_end) {
    return BaseSchedule(t_base, beta_start, beta_end);
}

std::size_t SchedulerKind::resolved_boundary(std::size_t t_base) const {
    if (boundary_index != 0) {
        return boundary_index;
    }
    return static_cast<std::size_t>(std::llround(0.699 * static_cast<double>(t_base)));
}

std::string SchedulerKind::name() const {
    return placement == Placement::Uniform ? "uniform" : "nonuniform";
}

SchedulerKind parse_scheduler_kind(const std::string& name) {
    if (name == "uniform") {
        return SchedulerKind::uniform();
    }
    if (name == "nonuniform" || name == "non-uniform") {
        return SchedulerKind::non_uniform();
    }
    throw ScheduleError("unknown scheduler kind \"" + name + "\" (expected uniform or nonuniform)");
}

StepGrid::StepGrid(std::shared_ptr<const BaseSchedule> base, std::vector<std::size_t> indices, SchedulerKind kind)
    : base_(std::move(base)), indices_(std::move(indices)), kind_(kind) {
    if (!base_) {
        throw ScheduleError("step grid needs a base schedule");
    }
    if (indices_.empty()) {
        throw ScheduleError("step grid must contain at least one step");
    }
    for (std::size_t k = 0; k < indices_.size(); ++k) {
        if (indices_[k] < 1 || indices_[k] > base_->t_base()) {
            throw ScheduleError("grid index " + std::to_string(indices_[k]) + " outside [1, " +
                                std::to_string(base_->t_base()) + "]");
        }
        if (k > 0 && indices_[k] <= indices_[k - 1]) {
            throw ScheduleError("grid indices must be strictly ascending; " + std::to_string(indices_[k]) +
                                " follows " + std::to_string(indices_[k - 1]));
        }
    }
    if (indices_.back() != base_->t_base()) {
        throw ScheduleError("grid must end at base step " + std::to_string(base_->t_base()));
    }
    points_.reserve(indices_.size() + 1);
    points_.push_back({1.0, 0.0});
    for (auto i : indices_) {
        points_.push_back(base_->alpha_sigma(i));
    }
}

std::size_t StepGrid::base_index(std::size_t position) const {
    if (position > indices_.size()) {
        throw ScheduleError("grid position " + std::to_string(position) + " outside [0, " +
                            std::to_string(indices_.size()) + "]");
    }
    return position == 0 ? 0 : indices_[position - 1];
}

AlphaSigma StepGrid::point(std::size_t position) const {
    if (position > indices_.size()) {
        throw ScheduleError("grid position " + std::to_string(position) + " outside [0, " +
                            std::to_string(indices_.size()) + "]");
    }
    return points_[position];
}

bool StepGrid::contains(std::size_t base_step) const {
    return std::binary_search(indices_.begin(), indices_.end(), base_step);
}

namespace {

std::size_t rounded_ratio(std::size_t j, std::size_t span, std::size_t parts) {
    return static_cast<std::size_t>(
        std::llround(static_cast<double>(j) * static_cast<double>(span) / static_cast<double>(parts)));
}

void append_checked(std::vector<std::size_t>& out, std::size_t index, std::size_t s_steps) {
    if (!out.empty() && index <= out.back()) {
        throw ScheduleError("S = " + std::to_string(s_steps) + " produces duplicate grid index " +
                            std::to_string(index) + " after rounding");
    }
    if (index == 0) {
        throw ScheduleError("S = " + std::to_string(s_steps) + " rounds a grid step onto base step 0");
    }
    out.push_back(index);
}

}  // namespace

StepGrid subsample(std::shared_ptr<const BaseSchedule> base, std::size_t s_steps, SchedulerKind kind) {
    if (!base) {
        throw ScheduleError("subsample needs a base schedule");
    }
    const std::size_t t = base->t_base();
    if (s_steps < 1 || s_steps > t) {
        throw ScheduleError("grid size " + std::to_string(s_steps) + " outside [1, " + std::to_string(t) + "]");
    }
    std::vector<std::size_t> indices;
    indices.reserve(s_steps);

    if (kind.placement == SchedulerKind::Placement::Uniform) {
        for (std::size_t j = 1; j <= s_steps; ++j) {
            append_checked(indices, rounded_ratio(j, t, s_steps), s_steps);
        }
    } else {
        if (!(kind.late_fraction > 0.0 && kind.late_fraction < 1.0)) {
            throw ScheduleError("late_fraction must lie in (0, 1), got " + std::to_string(kind.late_fraction));
        }
        const std::size_t boundary = kind.resolved_boundary(t);
        if (boundary <= 1 || boundary >= t) {
            throw ScheduleError("boundary index " + std::to_string(boundary) + " outside (1, " + std::to_string(t) +
                                ")");
        }
        const auto n_late =
            static_cast<std::size_t>(std::llround(kind.late_fraction * static_cast<double>(s_steps)));
        if (n_late == 0 || n_late >= s_steps) {
            throw ScheduleError("non-uniform grid with S = " + std::to_string(s_steps) +
                                " leaves no steps on one side of the boundary");
        }
        const std::size_t n_early = s_steps - n_late;
        for (std::size_t j = 1; j <= n_early; ++j) {
            append_checked(indices, rounded_ratio(j, boundary, n_early), s_steps);
        }
        for (std::size_t j = 1; j <= n_late; ++j) {
            append_checked(indices, boundary + rounded_ratio(j, t - boundary, n_late), s_steps);
        }
    }
    return StepGrid(std::move(base), std::move(indices), kind);
}

void write_grid_csv(std::ostream& out, const StepGrid& grid) {
    const auto& base = grid.base();
    out << "grid_pos,base_index,t,alpha,sigma,snr\n";
    char line[256];
    for (std::size_t j = 0; j <= grid.steps(); ++j) {
        const std::size_t i = grid.base_index(j);
        const auto p = grid.point(j);
        const double t = static_cast<double>(i) / static_cast<double>(base.t_base());
        if (i == 0) {
            std::snprintf(line, sizeof line, "%zu,%zu,%.6g,%.6g,%.6g,inf\n", j, i, t, p.alpha, p.sigma);
        } else {
            std::snprintf(line, sizeof line, "%zu,%zu,%.6g,%.6g,%.6g,%.6g\n", j, i, t, p.alpha, p.sigma,
                          base.snr(i));
        }
        out << line;
    }
}

}  // namespace fastdiff
