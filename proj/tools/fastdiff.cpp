// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: schedule, train, sample, eval, bench-steps,
// bench-scheduler and oracle.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fastdiff/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fastdiff;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string steps;
    std::string scheduler;
    std::vector<std::string> overrides;
};

std::vector<std::size_t> parse_steps_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        RunConfig probe;
        probe.set("steps", item);
        out.push_back(probe.steps);
    }
    if (out.empty()) {
        throw ConfigError("--steps: empty list");
    }
    return out;
}

// Resolves the run configuration. A --steps list sets `steps` only when it has one entry.
RunConfig resolve(const Options& o) {
    RunConfig config = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got \"" + kv + "\"");
        }
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed) {
        config.seed = *o.seed;
    }
    if (!o.scheduler.empty()) {
        config.set("scheduler", o.scheduler);
    }
    if (!o.steps.empty()) {
        const auto list = parse_steps_list(o.steps);
        if (list.size() == 1) {
            config.steps = list[0];
        }
    }
    config.validate();
    if (config.task == Task::CustomDir && !fs::is_directory(config.dataset_dir)) {
        throw ConfigError("dataset_dir " + config.dataset_dir.string() + " is not a directory");
    }
    return config;
}

std::string hash_line(const RunConfig& config) { return "# config_hash=" + config.hash(); }

// Opens `path` for writing (creating parent directories), or returns nullptr for stdout.
std::unique_ptr<std::ofstream> open_out(const fs::path& path) {
    if (path.empty()) {
        return nullptr;
    }
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    auto f = std::make_unique<std::ofstream>(path);
    if (!*f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return f;
}

fs::path checkpoint_path(const Options& o, const RunConfig& config) {
    return o.checkpoint.empty() ? config.checkpoint_dir / "model.fdpm" : fs::path(o.checkpoint);
}

fs::path out_dir(const Options& o, const RunConfig& config, const std::string& sub) {
    return o.out.empty() ? config.report_dir / sub : fs::path(o.out);
}

Checkpoint load_matching(const Options& o, const RunConfig& config, const StepGrid& grid) {
    const auto path = checkpoint_path(o, config);
    if (!fs::exists(path)) {
        throw ConfigError("checkpoint " + path.string() + " does not exist");
    }
    auto ck = load_checkpoint(path);
    if (!(ck.grid == GridDescription::of(grid))) {
        throw ConfigError("checkpoint " + path.string() + " was trained on a different grid (" +
                          std::to_string(ck.grid.indices.size()) + " steps, " + ck.grid.kind.name() +
                          ") than configured (" + std::to_string(grid.steps()) + " steps, " + grid.kind().name() +
                          ")");
    }
    return ck;
}

int cmd_schedule(const Options& o) {
    const auto config = resolve(o);
    const auto grid = make_grid(config);
    auto file = open_out(o.out);
    std::ostream& out = file ? *file : std::cout;
    out << hash_line(config) << '\n';
    write_grid_csv(out, grid);
    return 0;
}

int cmd_train(const Options& o) {
    const auto config = resolve(o);
    const auto grid = make_grid(config);
    const auto data = make_split(config);
    const auto ckpt = checkpoint_path(o, config);
    std::optional<Checkpoint> resume;
    if (fs::exists(ckpt)) {
        resume = load_checkpoint(ckpt);
        std::cerr << "resuming " << ckpt.string() << " at iteration " << resume->iteration << '\n';
    }
    TrainOptions opts;
    opts.checkpoint_path = ckpt;
    opts.loss_csv = out_dir(o, config, "") / "loss.csv";
    opts.on_log = [](std::size_t it, double loss) { std::cerr << "iteration " << it << " loss " << loss << '\n'; };
    std::cerr << "config_hash " << config.hash() << ", train " << data.train.size() << ", test " << data.test.size()
              << '\n';
    const auto ck = train(config, data.train, grid, std::move(resume), opts);
    std::cout << "trained " << ck.iteration << " iterations -> " << ckpt.string() << '\n';
    return 0;
}

void write_prediction(const fs::path& dir, const std::string& id, const Tensor& pred) {
    const std::size_t h = pred.dim(1);
    const std::size_t w = pred.dim(2);
    for (std::size_t ch = 0; ch < pred.dim(0); ++ch) {
        Tensor plane(Shape{h, w});
        std::copy_n(pred.data().begin() + static_cast<std::ptrdiff_t>(ch * h * w), h * w, plane.data().begin());
        const std::string suffix = pred.dim(0) == 1 ? "" : "_c" + std::to_string(ch);
        write_image(dir / (id + suffix + ".pgm"), plane);
    }
}

int cmd_sample(const Options& o) {
    const auto config = resolve(o);
    const auto grid = make_grid(config);
    const auto ck = load_matching(o, config, grid);
    const auto data = make_split(config);
    const auto result = evaluate(config, ck.net, grid, data.test, true);
    const auto dir = out_dir(o, config, "samples");
    fs::create_directories(dir);
    auto csv = open_out(dir / "samples.csv");
    *csv << hash_line(config) << "\nid,seconds,denoiser_calls\n";
    for (std::size_t i = 0; i < result.predictions.size(); ++i) {
        const auto& id = data.test[i].id;
        write_prediction(dir, id, result.predictions[i]);
        char buf[64];
        std::snprintf(buf, sizeof buf, ",%.6f,%zu\n", result.sample_seconds[i], result.denoiser_calls_per_image);
        *csv << id << buf;
    }
    std::cout << "wrote " << result.predictions.size() << " samples to " << dir.string() << " ("
              << 1e3 * result.sample_seconds_per_image << " ms per image)\n";
    return 0;
}

int cmd_eval(const Options& o) {
    const auto config = resolve(o);
    const auto grid = make_grid(config);
    const auto ck = load_matching(o, config, grid);
    const auto data = make_split(config);
    const auto result = evaluate(config, ck.net, grid, data.test);
    const auto dir = out_dir(o, config, "");
    char timing[128];
    std::snprintf(timing, sizeof timing, "sample_seconds_per_image=%.6f denoiser_calls=%zu",
                  result.sample_seconds_per_image, result.denoiser_calls_per_image);
    const std::vector<std::string> preamble = {"config_hash=" + config.hash(), timing};
    auto model_csv = open_out(dir / "eval.csv");
    result.model.write_csv(*model_csv, preamble);
    auto base_csv = open_out(dir / "baseline.csv");
    result.baseline.write_csv(*base_csv, preamble);
    std::printf("model    PSNR %.4f dB  SSIM %.4f\nbaseline PSNR %.4f dB  SSIM %.4f\n%s\n", result.model.mean_psnr(),
                result.model.mean_ssim(), result.baseline.mean_psnr(), result.baseline.mean_ssim(), timing);
    return 0;
}

int run_bench(const Options& o, const RunConfig& config, const std::vector<RunConfig>& cases,
              const std::string& default_name) {
    const auto data = make_split(config);
    std::vector<BenchRow> rows;
    for (const auto& c : cases) {
        rows.push_back(run_bench_case(c, data, &std::cerr));
        const auto& r = rows.back();
        std::fprintf(stderr, "S=%zu %s: PSNR %.4f (baseline %.4f), SSIM %.4f (baseline %.4f), %.3f ms/image\n",
                     r.steps, r.scheduler.c_str(), r.psnr_db, r.baseline_psnr_db, r.ssim, r.baseline_ssim,
                     r.sample_ms_per_image);
    }
    const fs::path path = o.out.empty() ? config.report_dir / default_name : fs::path(o.out);
    auto f = open_out(path);
    write_bench_csv(*f, rows, config);
    std::cout << "wrote " << path.string() << '\n';
    return 0;
}

int cmd_bench_steps(const Options& o) {
    const auto config = resolve(o);
    const auto list = parse_steps_list(o.steps.empty() ? "3,10,100" : o.steps);
    std::vector<RunConfig> cases;
    for (std::size_t s : list) {
        RunConfig c = config;
        c.steps = s;
        c.validate();
        cases.push_back(c);
    }
    return run_bench(o, config, cases, "bench_steps.csv");
}

int cmd_bench_scheduler(const Options& o) {
    const auto config = resolve(o);
    RunConfig uniform = config;
    uniform.set("scheduler", "uniform");
    RunConfig non_uniform = config;
    non_uniform.set("scheduler", "nonuniform");
    return run_bench(o, config, {uniform, non_uniform}, "bench_scheduler.csv");
}

int cmd_oracle(const Options& o) {
    const auto config = resolve(o);
    const auto checks = run_oracle(config);
    auto file = open_out(o.out);
    if (file) {
        *file << hash_line(config) << "\ncheck,pass,detail\n";
    }
    bool ok = true;
    for (const auto& c : checks) {
        std::printf("%s %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
        if (file) {
            *file << c.name << ',' << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
        }
        ok = ok && c.pass;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fastdiff: few-step conditional diffusion on a CPU"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "key=value run configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "training seed (overrides the config)");
        sub->add_option("--out", o.out, "output file or directory");
        sub->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <checkpoint_dir>/model.fdpm)");
        sub->add_option("--steps", o.steps, "step count S (comma-separated list for bench-steps)");
        sub->add_option("--scheduler", o.scheduler, "grid placement")->check(CLI::IsMember({"uniform", "nonuniform"}));
        sub->add_option("--set", o.overrides, "extra key=value config override (repeatable)");
    };

    struct Verb {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const Verb verbs[] = {
        {"schedule", "dump the step grid as CSV", cmd_schedule},
        {"train", "train (or resume) a model", cmd_train},
        {"sample", "sample the test split and write images", cmd_sample},
        {"eval", "score samples against targets", cmd_eval},
        {"bench-steps", "train and evaluate one model per step count", cmd_bench_steps},
        {"bench-scheduler", "compare uniform and non-uniform grids", cmd_bench_scheduler},
        {"oracle", "training-free sampler and schedule checks", cmd_oracle},
    };
    int (*selected)(const Options&) = nullptr;
    for (const auto& v : verbs) {
        auto* sub = app.add_subcommand(v.name, v.help);
        common(sub);
        sub->callback([&selected, &v] { selected = v.run; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return selected(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
