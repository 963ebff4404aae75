// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fastdiff {

namespace fs = std::filesystem;

std::string task_name(Task task) {
    switch (task) {
        case Task::Denoise:
            return "denoise";
        case Task::SuperResolution:
            return "sr";
        case Task::Translation:
            return "translate";
        case Task::CustomDir:
            return "custom-dir";
    }
    return "?";
}

Task parse_task(const std::string& name) {
    if (name == "denoise") return Task::Denoise;
    if (name == "sr") return Task::SuperResolution;
    if (name == "translate") return Task::Translation;
    if (name == "custom-dir") return Task::CustomDir;
    throw ConfigError("unknown task \"" + name + "\" (expected sr, denoise, translate or custom-dir)");
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] != '-') {
            const auto x = std::stoull(v, &used);
            if (used == v.size()) {
                return static_cast<std::size_t>(x);
            }
        }
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a non-negative integer, got \"" + v + "\"");
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size() && std::isfinite(x)) {
            return x;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a finite number, got \"" + v + "\"");
}

std::string real_text(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KeySpec {
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <class M>
KeySpec size_key(const char* name, M RunConfig::*member) {
    return {name, [member](const RunConfig& c) { return std::to_string(c.*member); },
            [member, name](RunConfig& c, const std::string& v) { c.*member = parse_size(name, v); }};
}

KeySpec real_key(const char* name, double RunConfig::*member) {
    return {name, [member](const RunConfig& c) { return real_text(c.*member); },
            [member, name](RunConfig& c, const std::string& v) { c.*member = parse_real(name, v); }};
}

KeySpec path_key(const char* name, fs::path RunConfig::*member) {
    return {name, [member](const RunConfig& c) { return (c.*member).string(); },
            [member](RunConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = {
        {"task", [](const RunConfig& c) { return task_name(c.task); },
         [](RunConfig& c, const std::string& v) { c.task = parse_task(v); }},
        size_key("t_base", &RunConfig::t_base),
        real_key("beta_start", &RunConfig::beta_start),
        real_key("beta_end", &RunConfig::beta_end),
        size_key("steps", &RunConfig::steps),
        {"scheduler", [](const RunConfig& c) { return c.scheduler.name(); },
         [](RunConfig& c, const std::string& v) {
             auto k = parse_scheduler_kind(v);
             k.boundary_index = c.scheduler.boundary_index;
             k.late_fraction = c.scheduler.late_fraction;
             c.scheduler = k;
         }},
        {"boundary_index", [](const RunConfig& c) { return std::to_string(c.scheduler.boundary_index); },
         [](RunConfig& c, const std::string& v) { c.scheduler.boundary_index = parse_size("boundary_index", v); }},
        {"late_fraction", [](const RunConfig& c) { return real_text(c.scheduler.late_fraction); },
         [](RunConfig& c, const std::string& v) { c.scheduler.late_fraction = parse_real("late_fraction", v); }},
        size_key("base_width", &RunConfig::base_width),
        size_key("levels", &RunConfig::levels),
        size_key("time_embed_dim", &RunConfig::time_embed_dim),
        size_key("image_size", &RunConfig::image_size),
        {"lr", [](const RunConfig& c) { return real_text(c.adam.lr); },
         [](RunConfig& c, const std::string& v) { c.adam.lr = parse_real("lr", v); }},
        {"adam_beta1", [](const RunConfig& c) { return real_text(c.adam.beta1); },
         [](RunConfig& c, const std::string& v) { c.adam.beta1 = parse_real("adam_beta1", v); }},
        {"adam_beta2", [](const RunConfig& c) { return real_text(c.adam.beta2); },
         [](RunConfig& c, const std::string& v) { c.adam.beta2 = parse_real("adam_beta2", v); }},
        {"adam_eps", [](const RunConfig& c) { return real_text(c.adam.eps); },
         [](RunConfig& c, const std::string& v) { c.adam.eps = parse_real("adam_eps", v); }},
        size_key("iterations", &RunConfig::iterations),
        size_key("batch_size", &RunConfig::batch_size),
        size_key("checkpoint_every", &RunConfig::checkpoint_every),
        size_key("log_every", &RunConfig::log_every),
        size_key("n_images", &RunConfig::n_images),
        size_key("n_volumes", &RunConfig::n_volumes),
        size_key("volume_depth", &RunConfig::volume_depth),
        size_key("blob_count", &RunConfig::blob_count),
        real_key("blob_scale_min", &RunConfig::blob_scale_min),
        real_key("blob_scale_max", &RunConfig::blob_scale_max),
        real_key("depth_scale_min", &RunConfig::depth_scale_min),
        real_key("depth_scale_max", &RunConfig::depth_scale_max),
        real_key("dose_fraction", &RunConfig::dose_fraction),
        real_key("test_fraction", &RunConfig::test_fraction),
        size_key("eval_images", &RunConfig::eval_images),
        size_key("seed", &RunConfig::seed),
        size_key("data_seed", &RunConfig::data_seed),
        size_key("split_seed", &RunConfig::split_seed),
        size_key("sample_seed", &RunConfig::sample_seed),
        {"sampler", [](const RunConfig& c) {
             return std::string(c.sampler == SamplerMode::Deterministic ? "deterministic" : "ancestral");
         },
         [](RunConfig& c, const std::string& v) {
             if (v == "deterministic") {
                 c.sampler = SamplerMode::Deterministic;
             } else if (v == "ancestral") {
                 c.sampler = SamplerMode::Ancestral;
             } else {
                 throw ConfigError("sampler: expected deterministic or ancestral, got \"" + v + "\"");
             }
         }},
        path_key("dataset_dir", &RunConfig::dataset_dir),
        path_key("checkpoint_dir", &RunConfig::checkpoint_dir),
        path_key("report_dir", &RunConfig::report_dir),
    };
    return table;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& k : key_table()) {
            out.emplace_back(k.name);
        }
        return out;
    }();
    return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& k : key_table()) {
        if (key == k.name) {
            k.set(*this, value);
            return;
        }
    }
    throw ConfigError("unknown config key \"" + key + "\"");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& k : key_table()) {
        out += k.name;
        out += '=';
        out += k.get(*this);
        out += '\n';
    }
    return out;
}

std::string RunConfig::hash() const {
    // Output locations do not change results, so they are left out.
    std::string text;
    for (const auto& k : key_table()) {
        if (k.name == std::string("checkpoint_dir") || k.name == std::string("report_dir")) continue;
        text += k.name;
        text += '=';
        text += k.get(*this);
        text += '\n';
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (steps < 1 || steps > t_base) fail("steps must lie in [1, t_base]");
    if (batch_size < 1) fail("batch_size must be positive");
    if (iterations < 1) fail("iterations must be positive");
    if (eval_images < 1) fail("eval_images must be positive");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0, 1)");
    if (!(dose_fraction > 0.0 && dose_fraction <= 1.0)) fail("dose_fraction must lie in (0, 1]");
    if (!(adam.lr > 0.0)) fail("lr must be positive");
    if (task == Task::CustomDir && dataset_dir.empty()) fail("task custom-dir needs dataset_dir");
    if (task == Task::SuperResolution && volume_depth < 3) fail("volume_depth must be at least 3 for sr");
    DenoiserConfig d;
    d.base_width = base_width;
    d.levels = levels;
    d.time_embed_dim = time_embed_dim;
    d.image_size = image_size;
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
}

RunConfig parse_config(std::istream& in, const std::string& source) {
    RunConfig config;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(number) + ": expected key=value");
        }
        try {
            config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    config.validate();
    return config;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    return parse_config(in, path.string());
}

std::shared_ptr<const BaseSchedule> make_base(const RunConfig& config) {
    return std::make_shared<const BaseSchedule>(config.t_base, config.beta_start, config.beta_end);
}

StepGrid make_grid(const RunConfig& config) { return subsample(make_base(config), config.steps, config.scheduler); }

Dataset make_dataset(const RunConfig& config) {
    SyntheticVolumeSpec spec;
    spec.height = config.image_size;
    spec.width = config.image_size;
    spec.depth = config.volume_depth;
    spec.blob_count = config.blob_count;
    spec.blob_scale_min = config.blob_scale_min;
    spec.blob_scale_max = config.blob_scale_max;
    spec.depth_scale_min = config.depth_scale_min;
    spec.depth_scale_max = config.depth_scale_max;
    spec.seed = config.data_seed;
    switch (config.task) {
        case Task::Denoise:
            return gen_denoise_pairs(spec, config.n_images, config.dose_fraction);
        case Task::SuperResolution:
            return gen_sr_triplets(spec, config.n_volumes);
        case Task::Translation:
            return gen_translation_pairs(spec, config.n_images);
        case Task::CustomDir:
            return load_image_dir(config.dataset_dir, ImageDirLayout{config.image_size});
    }
    throw ConfigError("unhandled task");
}

DataSplit make_split(const RunConfig& config) {
    auto [train_set, test_set] = split(make_dataset(config), config.test_fraction, config.split_seed);
    if (train_set.empty() || test_set.empty()) {
        throw ConfigError("dataset split leaves an empty train or test set");
    }
    return {std::move(train_set), std::move(test_set)};
}

DenoiserConfig denoiser_config(const RunConfig& config, const Dataset& data) {
    const auto& ts = data.target_shape();
    const auto& cs = data.cond_shape();
    if (ts[1] != ts[2]) {
        throw ConfigError("images must be square, got " + shape_to_string(ts));
    }
    DenoiserConfig d;
    d.target_channels = ts[0];
    d.cond_channels = cs[0];
    d.base_width = config.base_width;
    d.levels = config.levels;
    d.time_embed_dim = config.time_embed_dim;
    d.image_size = ts[1];
    d.validate();
    return d;
}

Tensor baseline_prediction(const Tensor& condition, std::size_t target_channels) {
    if (condition.rank() != 3) {
        throw ShapeError("baseline_prediction: condition must be [C,H,W], got " + shape_to_string(condition.shape()));
    }
    const std::size_t cc = condition.dim(0);
    const std::size_t plane = condition.dim(1) * condition.dim(2);
    Tensor out(Shape{target_channels, condition.dim(1), condition.dim(2)});
    for (std::size_t t = 0; t < target_channels; ++t) {
        for (std::size_t i = 0; i < plane; ++i) {
            if (target_channels == cc) {
                out[t * plane + i] = condition[t * plane + i];
            } else {
                double acc = 0.0;
                for (std::size_t k = 0; k < cc; ++k) {
                    acc += condition[k * plane + i];
                }
                out[t * plane + i] = static_cast<float>(acc / static_cast<double>(cc));
            }
        }
    }
    return out;
}

namespace {

// Key of the initialization stream; iteration k uses key k.
constexpr std::uint64_t kInitStreamKey = ~std::uint64_t{0};

}  // namespace

Checkpoint train(const RunConfig& config, const Dataset& train_set, const StepGrid& grid,
                 std::optional<Checkpoint> resume, const TrainOptions& options) {
    const auto dcfg = denoiser_config(config, train_set);
    Checkpoint ck;
    if (resume) {
        ck = std::move(*resume);
        if (!(ck.grid == GridDescription::of(grid))) {
            throw ConfigError("checkpoint grid does not match the configured grid (steps " +
                              std::to_string(ck.grid.indices.size()) + " vs " + std::to_string(grid.steps()) + ")");
        }
        if (!(ck.net.config() == dcfg)) {
            throw ConfigError("checkpoint network configuration does not match the run configuration");
        }
        if (ck.seed != config.seed) {
            throw ConfigError("checkpoint was trained with seed " + std::to_string(ck.seed) + ", config has " +
                              std::to_string(config.seed));
        }
        if (!ck.optimizer) {
            throw ConfigError("checkpoint carries no optimizer state; cannot resume");
        }
    } else {
        RandomSource init_rs = RandomSource(config.seed).split(kInitStreamKey);
        ck.net = DenoiserNet<float>::init(dcfg, init_rs);
        ck.optimizer.emplace(config.adam, ck.net.parameters());
        ck.grid = GridDescription::of(grid);
        ck.seed = config.seed;
        ck.iteration = 0;
    }

    const std::size_t stop = options.stop_at.value_or(config.iterations);
    std::ofstream loss_csv;
    if (!options.loss_csv.empty()) {
        const bool append = ck.iteration > 0 && fs::exists(options.loss_csv);
        if (options.loss_csv.has_parent_path()) {
            fs::create_directories(options.loss_csv.parent_path());
        }
        loss_csv.open(options.loss_csv, append ? std::ios::app : std::ios::trunc);
        if (!loss_csv) {
            throw std::runtime_error("cannot open loss log " + options.loss_csv.string());
        }
        if (!append) {
            loss_csv << "# config_hash=" << config.hash() << "\niteration,loss\n";
        }
    }
    auto save = [&] {
        if (!options.checkpoint_path.empty()) {
            if (options.checkpoint_path.has_parent_path()) {
                fs::create_directories(options.checkpoint_path.parent_path());
            }
            save_checkpoint(options.checkpoint_path, ck);
        }
    };

    const RandomSource root(config.seed);
    std::vector<std::size_t> indices(config.batch_size);
    double window_sum = 0.0;
    std::size_t window_count = 0;
    while (ck.iteration < stop) {
        RandomSource rs = root.split(ck.iteration);
        for (auto& idx : indices) {
            idx = static_cast<std::size_t>(rs.below(train_set.size()));
        }
        const auto result = train_step(ck.net, train_set.batch(indices), grid, *ck.optimizer, rs);
        ++ck.iteration;
        window_sum += result.loss;
        ++window_count;
        const bool log_now = (config.log_every != 0 && ck.iteration % config.log_every == 0) || ck.iteration == stop;
        if (log_now) {
            const double mean = window_sum / static_cast<double>(window_count);
            if (loss_csv.is_open()) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%zu,%.8g\n", static_cast<std::size_t>(ck.iteration), mean);
                loss_csv << buf << std::flush;
            }
            if (options.on_log) {
                options.on_log(ck.iteration, mean);
            }
            window_sum = 0.0;
            window_count = 0;
        }
        if (config.checkpoint_every != 0 && ck.iteration % config.checkpoint_every == 0 && ck.iteration != stop) {
            save();
        }
    }
    save();
    return ck;
}

std::size_t worker_count() {
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FASTDIFF_THREADS")) {
        try {
            const auto cap = std::stoul(env);
            if (cap >= 1) {
                n = std::min<std::size_t>(n, cap);
            }
        } catch (const std::exception&) {
        }
    }
    return n;
}

namespace {

// Runs fn(i) for i in [0, n) on up to worker_count() threads; rethrows the first error.
template <class F>
void parallel_for(std::size_t n, F fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace

EvalResult evaluate(const RunConfig& config, const DenoiserNet<float>& net, const StepGrid& grid,
                    const Dataset& test_set, bool keep_predictions) {
    const std::size_t n = std::min(config.eval_images, test_set.size());
    if (n == 0) {
        throw std::invalid_argument("evaluate: empty test set");
    }
    const auto& cfg = net.config();
    const RandomSource seeds(config.sample_seed);
    std::vector<Tensor> predictions(n);
    std::vector<double> seconds(n);
    std::vector<std::size_t> calls(n);
    const NetPredictor<float> predictor(net);
    parallel_for(n, [&](std::size_t i) {
        const auto& s = test_set[i];
        const Tensor c = s.c.reshaped({1, s.c.dim(0), s.c.dim(1), s.c.dim(2)});
        const CountingPredictor<float> counter(predictor);
        const SamplerRun run{seeds.split(i).seed(), config.sampler, false};
        const auto t0 = std::chrono::steady_clock::now();
        auto out = sample<float>(counter, c, Shape{1, cfg.target_channels, cfg.image_size, cfg.image_size}, grid, run);
        seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        calls[i] = counter.calls();
        Tensor pred = out.x0.reshaped(s.x0.shape());
        // outputs are images in [-1, 1]
        for (auto& v : pred.data()) {
            v = std::clamp(v, -1.0f, 1.0f);
        }
        predictions[i] = std::move(pred);
    });
    EvalResult result;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = test_set[i];
        result.model.add(s.id, s.x0, predictions[i]);
        result.baseline.add(s.id, s.x0, baseline_prediction(s.c, cfg.target_channels));
        total += seconds[i];
    }
    result.sample_seconds_per_image = total / static_cast<double>(n);
    result.sample_seconds = std::move(seconds);
    result.denoiser_calls_per_image = calls[0];
    if (keep_predictions) {
        result.predictions = std::move(predictions);
    }
    return result;
}

fs::path bench_checkpoint_path(const RunConfig& config) {
    return config.checkpoint_dir /
           ("bench_S" + std::to_string(config.steps) + "_" + config.scheduler.name() + "_" + config.hash() + ".fdpm");
}

BenchRow run_bench_case(const RunConfig& config, const DataSplit& data, std::ostream* log) {
    const StepGrid grid = make_grid(config);
    const fs::path ckpt = bench_checkpoint_path(config);
    const fs::path timing = fs::path(ckpt).replace_extension(".seconds");
    std::optional<Checkpoint> resume;
    double prior_seconds = 0.0;
    if (fs::exists(ckpt)) {
        resume = load_checkpoint(ckpt);
        std::ifstream t(timing);
        t >> prior_seconds;
    }
    BenchRow row;
    row.steps = config.steps;
    row.scheduler = config.scheduler.name();
    row.indices = grid.indices();

    Checkpoint ck;
    if (resume && resume->iteration >= config.iterations) {
        if (log) {
            *log << "reusing " << ckpt.string() << '\n';
        }
        ck = std::move(*resume);
        row.train_seconds = prior_seconds;
    } else {
        if (log) {
            *log << "training S=" << config.steps << " (" << config.scheduler.name() << ")"
                 << (resume ? " from iteration " + std::to_string(resume->iteration) : std::string()) << '\n';
        }
        TrainOptions opts;
        opts.checkpoint_path = ckpt;
        double elapsed = prior_seconds;
        auto last = std::chrono::steady_clock::now();
        opts.on_log = [&](std::size_t it, double loss) {
            const auto now = std::chrono::steady_clock::now();
            elapsed += std::chrono::duration<double>(now - last).count();
            last = now;
            std::ofstream(timing) << elapsed << '\n';
            if (log && (it % 1000 == 0 || it == config.iterations)) {
                *log << "  iteration " << it << " loss " << loss << '\n';
            }
        };
        ck = train(config, data.train, grid, std::move(resume), opts);
        row.train_seconds = elapsed;
    }
    const auto eval = evaluate(config, ck.net, grid, data.test);
    row.psnr_db = eval.model.mean_psnr();
    row.ssim = eval.model.mean_ssim();
    row.baseline_psnr_db = eval.baseline.mean_psnr();
    row.baseline_ssim = eval.baseline.mean_ssim();
    row.sample_ms_per_image = 1e3 * eval.sample_seconds_per_image;
    return row;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows, const RunConfig& config) {
    out << "# config_hash=" << config.hash() << '\n';
    out << "steps,scheduler,indices,psnr_db,ssim,baseline_psnr_db,baseline_ssim,train_seconds,sample_ms_per_image\n";
    for (const auto& r : rows) {
        std::string idx;
        for (std::size_t k = 0; k < r.indices.size(); ++k) {
            idx += (k ? " " : "") + std::to_string(r.indices[k]);
        }
        char buf[256];
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.3f,%.4f\n", r.psnr_db, r.ssim, r.baseline_psnr_db,
                      r.baseline_ssim, r.train_seconds, r.sample_ms_per_image);
        out << r.steps << ',' << r.scheduler << ',' << idx << buf;
    }
}

namespace {

double sample_variance(const TensorD& x) {
    double mean = 0.0;
    for (double v : x.data()) {
        mean += v;
    }
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x.data()) {
        ss += (v - mean) * (v - mean);
    }
    return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

SamplerAudit oracle_sampler_audit(const StepGrid& grid, std::size_t samples, std::uint64_t seed) {
    if (samples < 2) {
        throw std::invalid_argument("oracle_sampler_audit: need at least two samples");
    }
    const GaussianOraclePredictor<double> oracle(GaussianDataSpec{}, grid.base());
    const auto out = sample<double>(oracle, TensorD(), Shape{samples}, grid, SamplerRun{seed, SamplerMode::Deterministic, true});
    return {sample_variance(out.x0), sample_variance(out.trajectory.front()), analytic_final_variance(grid)};
}

std::vector<OracleCheck> run_oracle(const RunConfig& config, std::size_t samples) {
    std::vector<OracleCheck> checks;
    char buf[256];
    auto audit_checks = [&](const std::string& tag, const StepGrid& grid, double reference) {
        const auto a = oracle_sampler_audit(grid, samples, config.sample_seed);
        const double rel = std::abs(a.empirical / reference - 1.0);
        std::snprintf(buf, sizeof buf, "empirical %.6g, reference %.6g, relative error %.4f (limit 0.02)",
                      a.empirical, reference, rel);
        checks.push_back({"sampler_variance_" + tag, rel < 0.02, buf});
        // The sampler is linear in its prior, so output/prior variance is exact up to rounding.
        const double gain_rel = std::abs(a.empirical / a.prior / a.analytic - 1.0);
        std::snprintf(buf, sizeof buf, "output/prior variance %.12g, analytic %.12g, relative error %.2e (limit 1e-9)",
                      a.empirical / a.prior, a.analytic, gain_rel);
        checks.push_back({"sampler_gain_" + tag, gain_rel < 1e-9, buf});
    };
    const StepGrid grid = make_grid(config);
    audit_checks("S" + std::to_string(grid.steps()) + "_" + config.scheduler.name(), grid,
                 analytic_final_variance(grid));
    const StepGrid dense = subsample(make_base(config), config.t_base, SchedulerKind::uniform());
    audit_checks("dense", dense, 1.0);

    for (std::size_t t : {std::size_t{500}, std::size_t{1000}, std::size_t{2000}}) {
        const auto base = std::make_shared<const BaseSchedule>(t, config.beta_start, config.beta_end);
        bool decreasing = true;
        bool bounded = true;
        bool snr_decreasing = true;
        double worst_vp = 0.0;
        for (std::size_t i = 0; i <= t; ++i) {
            const auto p = base->alpha_sigma(i);
            worst_vp = std::max(worst_vp, std::abs(p.alpha * p.alpha + p.sigma * p.sigma - 1.0));
            bounded = bounded && base->alpha_sq(i) > 0.0 && base->alpha_sq(i) <= 1.0;
            if (i > 0 && !(base->alpha_sq(i) < base->alpha_sq(i - 1))) {
                decreasing = false;
            }
            if (i > 1 && !(base->snr(i) < base->snr(i - 1))) {
                snr_decreasing = false;
            }
        }
        const auto full = subsample(base, t, SchedulerKind::uniform());
        bool identity = true;
        for (std::size_t j = 0; j <= t; ++j) {
            identity = identity && full.base_index(j) == j;
        }
        bool grids_ok = true;
        for (const auto& kind : {SchedulerKind::uniform(), SchedulerKind::non_uniform()}) {
            const auto g = subsample(base, 10, kind);
            for (std::size_t j = 0; j < g.steps(); ++j) {
                grids_ok = grids_ok && g.point(j).alpha > g.point(j + 1).alpha;
            }
            grids_ok = grids_ok && g.point(0).alpha == 1.0 && g.base_index(g.steps()) == t;
        }
        const auto nu = subsample(base, 10, SchedulerKind::non_uniform());
        const std::size_t boundary = SchedulerKind::non_uniform().resolved_boundary(t);
        std::size_t late = 0;
        for (std::size_t j = 1; j <= nu.steps(); ++j) {
            late += nu.base_index(j) > boundary ? 1 : 0;
        }
        const bool pass = decreasing && bounded && snr_decreasing && worst_vp < 1e-12 && identity && grids_ok && late == 6;
        std::snprintf(buf, sizeof buf,
                      "alpha_sq decreasing %s, in (0,1] %s, snr decreasing %s, max |a^2+s^2-1| %.2e, "
                      "dense identity %s, grid alpha increasing to 1 %s, late steps %zu of 10",
                      decreasing ? "yes" : "no", bounded ? "yes" : "no", snr_decreasing ? "yes" : "no", worst_vp,
                      identity ? "yes" : "no", grids_ok ? "yes" : "no", late);
        checks.push_back({"schedule_invariants_T" + std::to_string(t), pass, buf});
    }
    // Terminal signal level: below 1e-3 for t_base >= 500, above it for t_base = 100.
    for (std::size_t t : {std::size_t{100}, std::size_t{500}, std::size_t{1000}, std::size_t{2000}}) {
        const BaseSchedule base(t, config.beta_start, config.beta_end);
        const double terminal = base.alpha_sq(t);
        const bool want_small = t >= 500;
        std::snprintf(buf, sizeof buf, "alpha_sq(T) %.4e, expected %s 1e-3", terminal, want_small ? "<" : ">");
        checks.push_back({"terminal_alpha_sq_T" + std::to_string(t), want_small ? terminal < 1e-3 : terminal > 1e-3,
                          buf});
    }
    return checks;
}

}  // namespace fastdiff
