// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/denoiser.hpp"

#include <cmath>
#include <fstream>

#include "fastdiff/binary_io.hpp"

namespace fastdiff {

void DenoiserConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("denoiser config: " + what); };
    if (target_channels < 1) fail("target_channels must be >= 1");
    if (cond_channels < 1) fail("cond_channels must be >= 1");
    if (base_width < 1) fail("base_width must be >= 1");
    if (levels < 1) fail("levels must be >= 1");
    if (levels > 8) fail("levels must be <= 8");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail("time_embed_dim must be a positive even number");
    if (image_size < 1) fail("image_size must be >= 1");
    if (image_size % (std::size_t{1} << (levels - 1)) != 0) {
        fail("image_size " + std::to_string(image_size) + " is not divisible by 2^(levels-1) = " +
             std::to_string(std::size_t{1} << (levels - 1)));
    }
}

std::vector<double> time_embed(std::size_t step, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw std::invalid_argument("time_embed: dimension must be even and positive, got " + std::to_string(dim));
    }
    std::vector<double> out(dim);
    const double i = static_cast<double>(step);
    for (std::size_t k = 0; k < dim / 2; ++k) {
        const double w = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
        out[2 * k] = std::sin(i * w);
        out[2 * k + 1] = std::cos(i * w);
    }
    return out;
}

template <class T>
std::size_t DenoiserNet<T>::add_param(std::string name, Shape shape) {
    params_.emplace_back(std::move(shape));
    names_.push_back(std::move(name));
    return params_.size() - 1;
}

template <class T>
typename DenoiserNet<T>::ResBlockSlots DenoiserNet<T>::add_res_block(const std::string& prefix, std::size_t in,
                                                                     std::size_t out) {
    const std::size_t d = config_.time_embed_dim;
    ResBlockSlots s{};
    s.conv1_w = add_param(prefix + ".conv1.weight", {out, in, 3, 3});
    s.conv1_b = add_param(prefix + ".conv1.bias", {out});
    s.time_w = add_param(prefix + ".time.weight", {d, out});
    s.time_b = add_param(prefix + ".time.bias", {out});
    s.conv2_w = add_param(prefix + ".conv2.weight", {out, out, 3, 3});
    s.conv2_b = add_param(prefix + ".conv2.bias", {out});
    if (in != out) {
        s.skip_w = add_param(prefix + ".skip.weight", {out, in, 1, 1});
        s.skip_b = add_param(prefix + ".skip.bias", {out});
    }
    return s;
}

template <class T>
DenoiserNet<T>::DenoiserNet(DenoiserConfig config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.time_embed_dim;
    const std::size_t levels = config_.levels;

    time_fc1_w_ = add_param("time.fc1.weight", {d, d});
    time_fc1_b_ = add_param("time.fc1.bias", {d});
    time_fc2_w_ = add_param("time.fc2.weight", {d, d});
    time_fc2_b_ = add_param("time.fc2.bias", {d});

    const std::size_t in_channels = config_.target_channels + config_.cond_channels;
    in_w_ = add_param("in.weight", {config_.base_width, in_channels, 3, 3});
    in_b_ = add_param("in.bias", {config_.base_width});

    std::size_t ch = config_.base_width;
    for (std::size_t l = 0; l < levels; ++l) {
        const std::size_t out = config_.channels_at(l);
        const std::string prefix = "down" + std::to_string(l);
        encoder_.push_back(add_res_block(prefix + ".block0", ch, out));
        encoder_.push_back(add_res_block(prefix + ".block1", out, out));
        ch = out;
    }
    for (std::size_t l = levels - 1; l-- > 0;) {
        const std::size_t out = config_.channels_at(l);
        const std::string prefix = "up" + std::to_string(l);
        decoder_.push_back(add_res_block(prefix + ".block0", ch + out, out));
        decoder_.push_back(add_res_block(prefix + ".block1", out, out));
        ch = out;
    }

    out_w_ = add_param("out.weight", {config_.target_channels, config_.base_width, 3, 3});
    out_b_ = add_param("out.bias", {config_.target_channels});
}

template <class T>
DenoiserNet<T> DenoiserNet<T>::init(const DenoiserConfig& config, RandomSource& rs) {
    DenoiserNet net(config);
    for (std::size_t k = 0; k < net.params_.size(); ++k) {
        auto& p = net.params_[k];
        if (p.rank() == 1) {
            continue;  // biases stay zero
        }
        // Conv weights are [out, in, kh, kw]; linear weights are [in, out].
        const std::size_t fan_in = p.rank() == 4 ? p.dim(1) * p.dim(2) * p.dim(3) : p.dim(0);
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        auto stream = rs.split(k);
        p = uniform<T>(stream, p.shape(), -bound, bound);
    }
    return net;
}

template <class T>
std::size_t DenoiserNet<T>::parameter_index(const std::string& name) const {
    for (std::size_t k = 0; k < names_.size(); ++k) {
        if (names_[k] == name) {
            return k;
        }
    }
    throw std::out_of_range("no parameter named \"" + name + "\"");
}

template <class T>
std::size_t DenoiserNet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.size();
    }
    return n;
}

template <class T>
std::vector<Var<T>> DenoiserNet<T>::bind(Graph<T>& g) const {
    std::vector<Var<T>> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) {
        vars.push_back(g.parameter(p));
    }
    return vars;
}

template <class T>
void DenoiserNet<T>::check_inputs(const Shape& x, const Shape& c, std::size_t n_steps) const {
    if (x.size() != 4 || x[1] != config_.target_channels || x[2] % (std::size_t{1} << (config_.levels - 1)) != 0 ||
        x[3] % (std::size_t{1} << (config_.levels - 1)) != 0) {
        throw ShapeError("denoiser: x_t must be [N," + std::to_string(config_.target_channels) +
                         ",H,W] with H, W divisible by 2^(levels-1); got " + shape_to_string(x));
    }
    if (c.size() != 4 || c[0] != x[0] || c[1] != config_.cond_channels || c[2] != x[2] || c[3] != x[3]) {
        throw ShapeError("denoiser: condition " + shape_to_string(c) + " not aligned with x_t " + shape_to_string(x) +
                         " (expects " + std::to_string(config_.cond_channels) + " channels)");
    }
    if (n_steps != x[0]) {
        throw ShapeError("denoiser: " + std::to_string(n_steps) + " step indices for batch of " +
                         std::to_string(x[0]));
    }
}

template <class T>
Var<T> DenoiserNet<T>::res_block(const ResBlockSlots& s, std::span<const Var<T>> p, Var<T> h, Var<T> time) const {
    // conv1 bias and the time projection combine into one [N, C] bias
    auto shift = ad::add_bias(ad::add_bias(ad::matmul(time, p[s.time_w]), p[s.time_b]), p[s.conv1_b]);
    auto r = ad::conv2d(ad::silu(h), p[s.conv1_w], shift, {1, 1});
    r = ad::conv2d(ad::silu(r), p[s.conv2_w], p[s.conv2_b], {1, 1});
    auto skip = h;
    if (s.skip_w != kNone) {
        skip = ad::conv2d(h, p[s.skip_w], p[s.skip_b], {1, 0});
    }
    return skip + r;
}

template <class T>
Var<T> DenoiserNet<T>::forward(Graph<T>& g, std::span<const Var<T>> p, Var<T> x_t, Var<T> c,
                               std::span<const std::size_t> steps) const {
    check_inputs(x_t.shape(), c.shape(), steps.size());
    if (p.size() != params_.size()) {
        throw std::invalid_argument("denoiser: expected " + std::to_string(params_.size()) + " parameter bindings");
    }
    const std::size_t n = steps.size();
    const std::size_t d = config_.time_embed_dim;

    BasicTensor<T> emb(Shape{n, d});
    for (std::size_t b = 0; b < n; ++b) {
        const auto e = time_embed(steps[b], d);
        for (std::size_t k = 0; k < d; ++k) {
            emb[b * d + k] = static_cast<T>(e[k]);
        }
    }
    auto time = g.constant(std::move(emb));
    time = ad::add_bias(ad::matmul(time, p[time_fc1_w_]), p[time_fc1_b_]);
    time = ad::add_bias(ad::matmul(ad::silu(time), p[time_fc2_w_]), p[time_fc2_b_]);
    time = ad::silu(time);

    auto h = ad::conv2d(ad::concat_channels(x_t, c), p[in_w_], p[in_b_], {1, 1});

    std::vector<Var<T>> skips;
    for (std::size_t l = 0; l < config_.levels; ++l) {
        if (l > 0) {
            h = ad::avgpool2x(h);
        }
        h = res_block(encoder_[2 * l], p, h, time);
        h = res_block(encoder_[2 * l + 1], p, h, time);
        skips.push_back(h);
    }
    std::size_t k = 0;
    for (std::size_t l = config_.levels - 1; l-- > 0;) {
        h = ad::concat_channels(ad::upsample_nearest2x(h), skips[l]);
        h = res_block(decoder_[k++], p, h, time);
        h = res_block(decoder_[k++], p, h, time);
    }
    return ad::conv2d(ad::silu(h), p[out_w_], p[out_b_], {1, 1});
}

template <class T>
BasicTensor<T> DenoiserNet<T>::predict(const BasicTensor<T>& x_t, const BasicTensor<T>& c,
                                       std::span<const std::size_t> steps) const {
    Graph<T> g(false);
    const auto vars = bind(g);
    auto out = forward(g, vars, g.constant(x_t), g.constant(c), steps);
    return out.value();
}

template class DenoiserNet<float>;
template class DenoiserNet<double>;

GridDescription GridDescription::of(const StepGrid& grid) {
    const auto& b = grid.base();
    return {b.t_base(), b.beta_start(), b.beta_end(), grid.kind(), grid.indices()};
}

StepGrid GridDescription::rebuild() const {
    auto base = std::make_shared<const BaseSchedule>(t_base, beta_start, beta_end);
    return StepGrid(std::move(base), indices, kind);
}

namespace {

void write_config(std::ostream& out, const DenoiserConfig& c) {
    for (auto v : {c.target_channels, c.cond_channels, c.base_width, c.levels, c.time_embed_dim, c.image_size}) {
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    }
}

DenoiserConfig read_config(std::istream& in) {
    DenoiserConfig c;
    for (auto* field : {&c.target_channels, &c.cond_channels, &c.base_width, &c.levels, &c.time_embed_dim,
                        &c.image_size}) {
        *field = binary::get<std::uint32_t>(in);
    }
    return c;
}

void write_grid(std::ostream& out, const GridDescription& g) {
    binary::put<std::uint64_t>(out, g.t_base);
    binary::put<double>(out, g.beta_start);
    binary::put<double>(out, g.beta_end);
    binary::put<std::uint8_t>(out, g.kind.placement == SchedulerKind::Placement::Uniform ? 0 : 1);
    binary::put<std::uint64_t>(out, g.kind.boundary_index);
    binary::put<double>(out, g.kind.late_fraction);
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.indices.size()));
    for (auto i : g.indices) {
        binary::put<std::uint64_t>(out, i);
    }
}

GridDescription read_grid(std::istream& in) {
    GridDescription g;
    g.t_base = binary::get<std::uint64_t>(in);
    g.beta_start = binary::get<double>(in);
    g.beta_end = binary::get<double>(in);
    g.kind.placement = binary::get<std::uint8_t>(in) == 0 ? SchedulerKind::Placement::Uniform
                                                          : SchedulerKind::Placement::NonUniform;
    g.kind.boundary_index = binary::get<std::uint64_t>(in);
    g.kind.late_fraction = binary::get<double>(in);
    const auto n = binary::get<std::uint32_t>(in);
    if (n > g.t_base) {
        throw binary::FormatError("grid has more steps than its base schedule");
    }
    g.indices.resize(n);
    for (auto& i : g.indices) {
        i = binary::get<std::uint64_t>(in);
    }
    return g;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw CheckpointError("cannot open " + tmp.string() + " for writing");
        }
        binary::put_magic(out, "FDPM");
        binary::put<std::uint32_t>(out, kCheckpointVersion);
        write_config(out, ck.net.config());
        const auto params = ck.net.parameters();
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
        for (std::size_t k = 0; k < params.size(); ++k) {
            binary::put_string(out, ck.net.parameter_names()[k]);
            write_tensor(out, params[k]);
        }
        write_grid(out, ck.grid);
        binary::put<std::uint64_t>(out, ck.iteration);
        binary::put<std::uint64_t>(out, ck.seed);
        binary::put<std::uint8_t>(out, ck.optimizer ? 1 : 0);
        if (ck.optimizer) {
            write_adam_state(out, *ck.optimizer);
        }
        if (!out) {
            throw CheckpointError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint " + path.string());
    }
    try {
        binary::expect_magic(in, "FDPM");
        const auto version = binary::get<std::uint32_t>(in);
        if (version != kCheckpointVersion) {
            throw CheckpointError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                                  "; this build reads version " + std::to_string(kCheckpointVersion));
        }
        const auto config = read_config(in);
        Checkpoint ck{DenoiserNet<float>(config), {}, 0, 0, std::nullopt};
        auto params = ck.net.parameters();
        const auto count = binary::get<std::uint32_t>(in);
        if (count != params.size()) {
            throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                                  std::to_string(params.size()));
        }
        for (std::size_t k = 0; k < count; ++k) {
            const auto name = binary::get_string(in);
            if (name != ck.net.parameter_names()[k]) {
                throw CheckpointError("tensor " + std::to_string(k) + " is \"" + name + "\", expected \"" +
                                      ck.net.parameter_names()[k] + "\"");
            }
            auto t = read_tensor<float>(in);
            if (t.shape() != params[k].shape()) {
                throw CheckpointError("tensor \"" + name + "\" has shape " + shape_to_string(t.shape()) +
                                      ", expected " + shape_to_string(params[k].shape()));
            }
            params[k] = std::move(t);
        }
        ck.grid = read_grid(in);
        ck.iteration = binary::get<std::uint64_t>(in);
        ck.seed = binary::get<std::uint64_t>(in);
        if (binary::get<std::uint8_t>(in) != 0) {
            ck.optimizer = read_adam_state<float>(in);
            if (ck.optimizer->m.size() != params.size()) {
                throw CheckpointError("optimizer state does not match the parameter list");
            }
        }
        return ck;
    } catch (const binary::FormatError& e) {
        throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace fastdiff
