// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "fastdiff/datasets.hpp"
#include "fastdiff/metrics.hpp"

using namespace fastdiff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "fastdiff_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SyntheticVolumeSpec small_spec(std::uint64_t seed) {
    SyntheticVolumeSpec s;
    s.seed = seed;
    return s;
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

Tensor plane(const Tensor& t, std::size_t ch) {
    const std::size_t h = t.dim(1), w = t.dim(2);
    Tensor out(Shape{h, w});
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(ch * h * w), h * w, out.data().begin());
    return out;
}

void write_raw_pgm(const fs::path& path, std::size_t w, std::size_t h, int maxval, const std::vector<int>& values) {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n" << w << ' ' << h << '\n' << maxval << '\n';
    for (int v : values) {
        if (maxval > 255) f.put(static_cast<char>(v >> 8));
        f.put(static_cast<char>(v & 0xff));
    }
}

}  // namespace

TEST_CASE("spec validation") {
    SyntheticVolumeSpec s;
    CHECK_NOTHROW(s.validate());
    s.height = 7;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = SyntheticVolumeSpec{};
    s.blob_count = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = SyntheticVolumeSpec{};
    s.depth_scale_min = 3.0;
    s.depth_scale_max = 2.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("super-resolution triplets") {
    const auto d = gen_sr_triplets(small_spec(1), 1);
    CHECK(d.size() == 8);
    CHECK(d.target_shape() == Shape{1, 32, 32});
    CHECK(d.cond_shape() == Shape{2, 32, 32});
    CHECK(gen_sr_triplets(small_spec(1), 1) == d);
    CHECK_FALSE(gen_sr_triplets(small_spec(2), 1) == d);

    // Average-of-neighbors baseline on a larger corpus.
    const auto corpus = gen_sr_triplets(small_spec(3), 20);
    double total = 0.0;
    for (const auto& s : corpus.samples()) {
        for (float v : s.x0.data()) REQUIRE((v >= -1.0f && v <= 1.0f));
        Tensor avg(Shape{1, 32, 32});
        for (std::size_t k = 0; k < avg.size(); ++k) avg[k] = 0.5f * (s.c[k] + s.c[avg.size() + k]);
        const double p = psnr(denormalize(s.x0), denormalize(avg));
        REQUIRE(std::isfinite(p));
        total += p;
    }
    CHECK(total / static_cast<double>(corpus.size()) > 10.0);

    // Slices of one volume share structure: the target is closer to its
    // neighbors than to a slice from another volume.
    const auto other = gen_sr_triplets(small_spec(4), 1);
    const Tensor neighbor = plane(d[3].c, 0);
    CHECK(psnr(denormalize(plane(d[3].x0, 0)), denormalize(neighbor)) >
          psnr(denormalize(plane(other[3].x0, 0)), denormalize(neighbor)));
}

TEST_CASE("low-dose pairs") {
    const auto full = gen_denoise_pairs(small_spec(5), 6, 1.0);
    for (const auto& s : full.samples()) {
        CHECK(s.c == s.x0);
    }
    const auto low = gen_denoise_pairs(small_spec(5), 6, 0.1);
    CHECK(low == gen_denoise_pairs(small_spec(5), 6, 0.1));
    CHECK(low[0].x0 == full[0].x0);
    CHECK_FALSE(low[0].c == low[0].x0);
    CHECK_THROWS_AS(gen_denoise_pairs(small_spec(5), 2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(gen_denoise_pairs(small_spec(5), 2, 1.5), std::invalid_argument);

    CHECK(low_dose_sigma(-1.0, 1.0) == 0.0);
    CHECK(low_dose_sigma(-1.0, 0.1) == doctest::Approx(0.15));
    CHECK(low_dose_sigma(1.0, 0.1) == doctest::Approx(std::sqrt(0.15 * 0.15 + 0.05 * 0.05)));
}

TEST_CASE("low-dose noise moments") {
    // Standardized residuals over ~1e6 pixels of generated clean images.
    const auto clean = gen_denoise_pairs(small_spec(6), 1000, 1.0);
    RandomSource rs(7);
    double ss = 0.0, sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : clean.samples()) {
        const Tensor noisy = add_low_dose_noise(s.x0, 0.1, rs);
        for (std::size_t k = 0; k < noisy.size(); ++k) {
            const double z = (noisy[k] - s.x0[k]) / low_dose_sigma(s.x0[k], 0.1);
            ss += z * z;
            sum += z;
            ++n;
        }
    }
    CHECK(n >= 1000000);
    const double mean = sum / static_cast<double>(n);
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(std::sqrt(ss / static_cast<double>(n) - mean * mean) - 1.0) < 0.02);

    // Two fixed intensity levels, raw standard deviation against the formula.
    for (float p : {-0.8f, 0.6f}) {
        const Tensor flat(Shape{1, 1000, 1000}, p);
        const Tensor noisy = add_low_dose_noise(flat, 0.1, rs);
        double acc = 0.0;
        for (std::size_t k = 0; k < noisy.size(); ++k) acc += (noisy[k] - p) * (noisy[k] - p);
        CHECK(std::abs(std::sqrt(acc / static_cast<double>(noisy.size())) / low_dose_sigma(p, 0.1) - 1.0) < 0.02);
    }
}

TEST_CASE("translation pairs") {
    const auto d = gen_translation_pairs(small_spec(8), 20);
    CHECK(d.size() == 20);
    CHECK(d.target_shape() == Shape{1, 32, 32});
    CHECK(d.cond_shape() == Shape{1, 32, 32});
    CHECK(d == gen_translation_pairs(small_spec(8), 20));
    double rho = 0.0;
    for (const auto& s : d.samples()) {
        const std::vector<double> a(s.c.data().begin(), s.c.data().end());
        const std::vector<double> b(s.x0.data().begin(), s.x0.data().end());
        rho += pearson(ranks(a), ranks(b));
    }
    CHECK(rho / static_cast<double>(d.size()) > 0.5);
}

TEST_CASE("dataset contract") {
    Dataset d;
    d.add({Tensor(Shape{1, 8, 8}), Tensor(Shape{2, 8, 8}), "a"});
    CHECK_THROWS_AS(d.add({Tensor(Shape{1, 8, 8}), Tensor(Shape{2, 8, 8}), "a"}), std::invalid_argument);
    CHECK_THROWS_AS(d.add({Tensor(Shape{1, 8, 8}), Tensor(Shape{1, 8, 8}), "b"}), ShapeError);
    CHECK_THROWS_AS(d.add({Tensor(Shape{1, 8, 8}, 1.5f), Tensor(Shape{2, 8, 8}), "c"}), std::invalid_argument);
    d.add({Tensor(Shape{1, 8, 8}, 0.5f), Tensor(Shape{2, 8, 8}), "d"});
    const std::vector<std::size_t> idx = {1, 0, 1};
    const auto batch = d.batch(idx);
    CHECK(batch.x0.shape() == Shape{3, 1, 8, 8});
    CHECK(batch.c.shape() == Shape{3, 2, 8, 8});
    CHECK(batch.x0[0] == 0.5f);
    CHECK(batch.x0[64] == 0.0f);
    CHECK_THROWS(Dataset{}.target_shape());
}

TEST_CASE("split") {
    const auto d = gen_denoise_pairs(small_spec(9), 100, 0.1);
    const auto [train, test] = split(d, 0.1, 3);
    CHECK(train.size() == 90);
    CHECK(test.size() == 10);
    std::set<std::string> ids;
    for (const auto& s : train.samples()) ids.insert(s.id);
    for (const auto& s : test.samples()) CHECK(ids.insert(s.id).second);
    CHECK(ids.size() == 100);
    const auto again = split(d, 0.1, 3);
    CHECK(again.first == train);
    CHECK(again.second == test);
    CHECK_FALSE(split(d, 0.1, 4).second == test);
}

TEST_CASE("image files") {
    const auto dir = fresh_dir("images");
    write_raw_pgm(dir / "max16.pgm", 2, 1, 65535, {65535, 0});
    const auto img16 = read_pgm(dir / "max16.pgm");
    CHECK(img16.bit_depth == 16);
    CHECK(img16.pixels.shape() == Shape{1, 2});
    CHECK(img16.pixels[0] == 1.0f);
    CHECK(img16.pixels[1] == -1.0f);
    write_raw_pgm(dir / "max8.pgm", 2, 1, 255, {255, 0});
    CHECK(read_pgm(dir / "max8.pgm").bit_depth == 8);
    CHECK(read_pgm(dir / "max8.pgm").pixels[0] == 1.0f);

    RandomSource rs(10);
    const Tensor pixels = uniform<float>(rs, {5, 7}, -1.0, 1.0);
    for (const char* name : {"rt.pgm", "rt.png"}) {
        write_image(dir / name, pixels);
        const auto back = read_image(dir / name);
        CHECK(back.bit_depth == 16);
        REQUIRE(back.pixels.shape() == pixels.shape());
        for (std::size_t k = 0; k < pixels.size(); ++k) {
            CHECK(std::abs(back.pixels[k] - pixels[k]) <= std::ldexp(1.0, -15));
        }
    }
    CHECK_THROWS(read_image(dir / "missing.pgm"));
    std::ofstream(dir / "bad.pgm") << "P2\n1 1\n255\n0\n";
    CHECK_THROWS(read_pgm(dir / "bad.pgm"));

    const Tensor flat(Shape{4, 4}, 0.25f);
    const Tensor up = resize_bilinear(flat, 8, 6);
    CHECK(up.shape() == Shape{8, 6});
    for (float v : up.data()) CHECK(v == doctest::Approx(0.25f));
}

TEST_CASE("directory round trip") {
    const auto d = gen_sr_triplets(small_spec(11), 1);
    const auto dir = fresh_dir("roundtrip");
    save_dataset(dir, d);
    const auto back = load_image_dir(dir);
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back[i].id == d[i].id);
        REQUIRE(back[i].c.shape() == d[i].c.shape());
        float worst = 0.0f;
        for (std::size_t k = 0; k < d[i].x0.size(); ++k) worst = std::max(worst, std::abs(back[i].x0[k] - d[i].x0[k]));
        for (std::size_t k = 0; k < d[i].c.size(); ++k) worst = std::max(worst, std::abs(back[i].c[k] - d[i].c[k]));
        CHECK(worst <= std::ldexp(1.0f, -15));
    }
    ImageDirLayout resized;
    resized.image_size = 16;
    CHECK(load_image_dir(dir, resized).target_shape() == Shape{1, 16, 16});
}

TEST_CASE("directory errors are itemized") {
    const auto dir = fresh_dir("broken");
    fs::create_directories(dir / "target");
    fs::create_directories(dir / "cond");
    std::ofstream(dir / "manifest.txt") << "a\nb\nc\n";
    write_raw_pgm(dir / "target" / "a.pgm", 2, 2, 65535, {0, 1, 2, 3});
    write_raw_pgm(dir / "cond" / "a.pgm", 2, 2, 255, {0, 1, 2, 3});
    write_raw_pgm(dir / "target" / "b.pgm", 2, 2, 65535, {0, 1, 2, 3});
    std::ofstream(dir / "target" / "c.pgm") << "garbage";
    write_raw_pgm(dir / "cond" / "c.pgm", 2, 2, 65535, {0, 1, 2, 3});
    try {
        load_image_dir(dir);
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(e.problems().size() >= 3);
        const std::string all = e.what();
        CHECK(all.find("b") != std::string::npos);
        CHECK(all.find("bit depth") != std::string::npos);
    }
    CHECK_THROWS_AS(load_image_dir(fresh_dir("empty")), DatasetError);
}
