// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/diffusion.hpp"

#include <cmath>
#include <ostream>

#include "fastdiff/binary_io.hpp"
#include "fastdiff/ops.hpp"

namespace fastdiff {

template <class T>
BasicTensor<T> forward_sample(const BasicTensor<T>& x0, std::size_t i, const BasicTensor<T>& eps,
                              const BaseSchedule& base) {
    return forward_sample(x0, base.alpha_sigma(i), eps);
}

template <class T>
BasicTensor<T> forward_sample(const BasicTensor<T>& x0, AlphaSigma p, const BasicTensor<T>& eps) {
    if (x0.shape() != eps.shape()) {
        throw ShapeError("forward_sample: x0 " + shape_to_string(x0.shape()) + " vs eps " +
                         shape_to_string(eps.shape()));
    }
    BasicTensor<T> out(x0.shape());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = static_cast<T>(p.alpha * static_cast<double>(x0[k]) + p.sigma * static_cast<double>(eps[k]));
    }
    return out;
}

void TrainBatch::validate() const {
    if (x0.rank() != 4 || c.rank() != 4) {
        throw ShapeError("train batch tensors must be [B,C,H,W], got " + shape_to_string(x0.shape()) + " and " +
                         shape_to_string(c.shape()));
    }
    if (x0.dim(0) != c.dim(0) || x0.dim(2) != c.dim(2) || x0.dim(3) != c.dim(3)) {
        throw ShapeError("train batch target " + shape_to_string(x0.shape()) + " and condition " +
                         shape_to_string(c.shape()) + " are not aligned");
    }
    for (const Tensor* t : {&x0, &c}) {
        for (float v : t->data()) {
            if (!(v >= -1.0f && v <= 1.0f)) {
                throw std::invalid_argument("train batch value " + std::to_string(v) + " outside [-1, 1]");
            }
        }
    }
}

TrainStepResult train_step(DenoiserNet<float>& net, const TrainBatch& batch, const StepGrid& grid,
                           AdamState<float>& opt, RandomSource& rs) {
    batch.validate();
    const std::size_t b = batch.size();
    const std::size_t per_item = batch.x0.size() / b;
    const auto& base = grid.base();

    TrainStepResult result;
    result.steps.resize(b);
    for (std::size_t k = 0; k < b; ++k) {
        result.steps[k] = grid.base_index(1 + static_cast<std::size_t>(rs.below(grid.steps())));
    }
    const Tensor eps = gaussian<float>(rs, batch.x0.shape());

    Tensor x_t(batch.x0.shape());
    for (std::size_t k = 0; k < b; ++k) {
        const auto p = base.alpha_sigma(result.steps[k]);
        const std::size_t off = k * per_item;
        for (std::size_t q = off; q < off + per_item; ++q) {
            x_t[q] = static_cast<float>(p.alpha * static_cast<double>(batch.x0[q]) +
                                        p.sigma * static_cast<double>(eps[q]));
        }
    }

    Graph<float> g;
    const auto params = net.bind(g);
    const auto eps_hat = net.forward(g, params, g.constant(std::move(x_t)), g.constant(batch.c), result.steps);
    result.loss = mse_loss(eps_hat.value(), eps);
    if (!std::isfinite(result.loss)) {
        throw NumericError("train_step: non-finite loss with random stream seed " + std::to_string(rs.seed()));
    }
    g.backward(ad::mse_loss(eps_hat, g.constant(eps)));

    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (auto v : params) {
        grads.push_back(g.grad(v));
    }
    adam_step<float>(net.parameters(), grads, opt);
    return result;
}

template <class T>
BasicTensor<T> ddim_step(const BasicTensor<T>& x_t, const BasicTensor<T>& eps_hat, AlphaSigma at, AlphaSigma prev) {
    if (x_t.shape() != eps_hat.shape()) {
        throw ShapeError("ddim_step: x_t " + shape_to_string(x_t.shape()) + " vs eps_hat " +
                         shape_to_string(eps_hat.shape()));
    }
    if (!(at.alpha > 0.0)) {
        throw NumericError("ddim_step: alpha must be positive");
    }
    const double ratio = prev.alpha / at.alpha;
    const double k = prev.sigma - ratio * at.sigma;
    BasicTensor<T> out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<T>(ratio * static_cast<double>(x_t[i]) + k * static_cast<double>(eps_hat[i]));
    }
    return out;
}

template <class T>
BasicTensor<T> analytic_eps_gaussian(const BasicTensor<T>& x_t, std::size_t i, const GaussianDataSpec& spec,
                                     const BaseSchedule& base) {
    return analytic_eps_gaussian(x_t, base.alpha_sigma(i), spec);
}

template <class T>
BasicTensor<T> analytic_eps_gaussian(const BasicTensor<T>& x_t, AlphaSigma p, const GaussianDataSpec& spec) {
    if (!(spec.scale > 0.0)) {
        throw std::invalid_argument("analytic_eps_gaussian: scale must be positive");
    }
    const double denom = p.alpha * p.alpha * spec.scale * spec.scale + p.sigma * p.sigma;
    BasicTensor<T> out(x_t.shape());
    const std::size_t plane = spec.mean_map ? spec.mean_map->size() : 0;
    if (spec.mean_map && (plane == 0 || x_t.size() % plane != 0)) {
        throw ShapeError("analytic_eps_gaussian: mean map " + shape_to_string(spec.mean_map->shape()) +
                         " does not tile " + shape_to_string(x_t.shape()));
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double mu = spec.mean_map ? (*spec.mean_map)[k % plane] : spec.mean;
        out[k] = static_cast<T>(p.sigma * (static_cast<double>(x_t[k]) - p.alpha * mu) / denom);
    }
    return out;
}

template <class T>
SampleResult<T> sample(const NoisePredictor<T>& predictor, const BasicTensor<T>& c, const Shape& latent_shape,
                       const StepGrid& grid, const SamplerRun& run) {
    RandomSource rs(run.seed);
    SampleResult<T> result;
    BasicTensor<T> x = gaussian<T>(rs, latent_shape);
    if (run.keep_trajectory) {
        result.trajectory.push_back(x);
    }
    for (std::size_t j = grid.steps(); j >= 1; --j) {
        const auto at = grid.point(j);
        const auto prev = grid.point(j - 1);
        const auto eps_hat = predictor.predict(x, c, grid.base_index(j));
        if (eps_hat.shape() != x.shape()) {
            throw ShapeError("sample: predictor returned " + shape_to_string(eps_hat.shape()) + " for latent " +
                             shape_to_string(x.shape()));
        }
        if (run.mode == SamplerMode::Deterministic) {
            x = ddim_step(x, eps_hat, at, prev);
        } else {
            const double a2 = at.alpha * at.alpha;
            const double a2_prev = prev.alpha * prev.alpha;
            const double beta = 1.0 - a2 / a2_prev;
            const double mean_scale = prev.alpha / at.alpha;
            const double eps_scale = beta / at.sigma;
            const double var = j > 1 ? (1.0 - a2_prev) / (1.0 - a2) * beta : 0.0;
            const double sd = std::sqrt(var);
            BasicTensor<T> next(x.shape());
            for (std::size_t k = 0; k < x.size(); ++k) {
                double v = mean_scale * (static_cast<double>(x[k]) - eps_scale * static_cast<double>(eps_hat[k]));
                if (j > 1) {
                    v += sd * rs.normal();
                }
                next[k] = static_cast<T>(v);
            }
            x = std::move(next);
        }
        if (!all_finite(x)) {
            throw NumericError("sample: non-finite latent at grid position " + std::to_string(j - 1) + " (seed " +
                               std::to_string(run.seed) + ")");
        }
        if (run.keep_trajectory) {
            result.trajectory.push_back(x);
        }
    }
    result.x0 = std::move(x);
    return result;
}

double analytic_final_variance(const StepGrid& grid) {
    double v = 1.0;
    for (std::size_t j = grid.steps(); j >= 1; --j) {
        const auto a = grid.point(j);
        const auto b = grid.point(j - 1);
        const double f = b.alpha * a.alpha + b.sigma * a.sigma;
        v *= f * f;
    }
    return v;
}

template <class T>
void write_trajectory(std::ostream& out, const std::vector<BasicTensor<T>>& trajectory) {
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(trajectory.size()));
    for (const auto& x : trajectory) {
        write_tensor(out, x);
    }
}

#define FASTDIFF_INSTANTIATE_DIFFUSION(T)                                                                       \
    template BasicTensor<T> forward_sample(const BasicTensor<T>&, std::size_t, const BasicTensor<T>&,           \
                                           const BaseSchedule&);                                                \
    template BasicTensor<T> forward_sample(const BasicTensor<T>&, AlphaSigma, const BasicTensor<T>&);           \
    template BasicTensor<T> ddim_step(const BasicTensor<T>&, const BasicTensor<T>&, AlphaSigma, AlphaSigma);    \
    template BasicTensor<T> analytic_eps_gaussian(const BasicTensor<T>&, std::size_t, const GaussianDataSpec&, \
                                                  const BaseSchedule&);                                         \
    template BasicTensor<T> analytic_eps_gaussian(const BasicTensor<T>&, AlphaSigma, const GaussianDataSpec&);  \
    template SampleResult<T> sample(const NoisePredictor<T>&, const BasicTensor<T>&, const Shape&,              \
                                    const StepGrid&, const SamplerRun&);                                        \
    template void write_trajectory(std::ostream&, const std::vector<BasicTensor<T>>&);

FASTDIFF_INSTANTIATE_DIFFUSION(float)
FASTDIFF_INSTANTIATE_DIFFUSION(double)

}  // namespace fastdiff
