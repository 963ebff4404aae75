// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>

#include "fastdiff/datasets.hpp"

namespace fastdiff {

namespace fs = std::filesystem;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string msg = std::to_string(problems.size()) + " dataset problem(s):";
    for (const auto& p : problems) {
        msg += "\n  - " + p;
    }
    return msg;
}

float normalize(unsigned value, unsigned maxval) {
    return static_cast<float>(2.0 * static_cast<double>(value) / static_cast<double>(maxval) - 1.0);
}

std::uint16_t quantize16(float v) {
    const double u = (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) / 2.0;
    return static_cast<std::uint16_t>(std::lround(u * 65535.0));
}

void require_image(const Tensor& pixels, const char* op) {
    if (pixels.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected an [H, W] image, got " + shape_to_string(pixels.shape()));
    }
}

// Reads the next header token of a PNM file, skipping whitespace and comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) {
                break;
            }
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

unsigned pnm_number(std::istream& in, const fs::path& path, const char* field) {
    const auto tok = pnm_token(in);
    try {
        std::size_t used = 0;
        const unsigned long v = std::stoul(tok, &used);
        if (used == tok.size() && v > 0 && v <= 1u << 24) {
            return static_cast<unsigned>(v);
        }
    } catch (const std::exception&) {
    }
    throw std::runtime_error(path.string() + ": bad PGM " + field + " \"" + tok + "\"");
}

}  // namespace

DatasetError::DatasetError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

GrayImage read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open");
    }
    if (pnm_token(in) != "P5") {
        throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
    }
    const unsigned w = pnm_number(in, path, "width");
    const unsigned h = pnm_number(in, path, "height");
    const unsigned maxval = pnm_number(in, path, "maxval");
    if (maxval > 65535) {
        throw std::runtime_error(path.string() + ": maxval " + std::to_string(maxval) + " exceeds 65535");
    }
    const bool wide = maxval > 255;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<unsigned char> raw(n * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw std::runtime_error(path.string() + ": truncated pixel data");
    }
    GrayImage img{Tensor(Shape{h, w}), wide ? 16 : 8};
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned v = wide ? (unsigned{raw[2 * i]} << 8) | raw[2 * i + 1] : raw[i];
        if (v > maxval) {
            throw std::runtime_error(path.string() + ": pixel value above maxval");
        }
        img.pixels[i] = normalize(v, maxval);
    }
    return img;
}

void write_pgm(const fs::path& path, const Tensor& pixels) {
    require_image(pixels, "write_pgm");
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(path.string() + ": cannot open for writing");
    }
    out << "P5\n" << pixels.dim(1) << ' ' << pixels.dim(0) << "\n65535\n";
    std::vector<unsigned char> raw(pixels.size() * 2);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto q = quantize16(pixels[i]);
        raw[2 * i] = static_cast<unsigned char>(q >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) {
        throw std::runtime_error(path.string() + ": write failed");
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
    *buf = msg;
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

GrayImage read_png(const fs::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) {
        throw std::runtime_error(path.string() + ": cannot open");
    }
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
    if (png == nullptr) {
        throw std::runtime_error("libpng initialization failed");
    }
    png_infop info = png_create_info_struct(png);
    GrayImage img;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> data;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path.string() + ": " + (error.empty() ? "invalid PNG" : error));
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if ((color & PNG_COLOR_MASK_ALPHA) != 0) {
        png_set_strip_alpha(png);
    }
    if ((color & PNG_COLOR_MASK_COLOR) != 0) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    const int out_depth = png_get_bit_depth(png, info);
    data.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = data.data() + y * rowbytes;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    img.bit_depth = out_depth == 16 ? 16 : 8;
    img.pixels = Tensor(Shape{h, w});
    for (std::size_t y = 0; y < h; ++y) {
        const unsigned char* row = data.data() + y * rowbytes;
        for (std::size_t x = 0; x < w; ++x) {
            img.pixels[y * w + x] = img.bit_depth == 16
                                        ? normalize((unsigned{row[2 * x]} << 8) | row[2 * x + 1], 65535)
                                        : normalize(row[x], 255);
        }
    }
    return img;
}

void write_png(const fs::path& path, const Tensor& pixels) {
    require_image(pixels, "write_png");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) {
        throw std::runtime_error(path.string() + ": cannot open for writing");
    }
    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
    if (png == nullptr) {
        throw std::runtime_error("libpng initialization failed");
    }
    png_infop info = png_create_info_struct(png);
    const std::size_t h = pixels.dim(0);
    const std::size_t w = pixels.dim(1);
    std::vector<unsigned char> data(h * w * 2);
    for (std::size_t i = 0; i < h * w; ++i) {
        const auto q = quantize16(pixels[i]);
        data[2 * i] = static_cast<unsigned char>(q >> 8);
        data[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) {
        rows[y] = data.data() + y * w * 2;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(path.string() + ": " + (error.empty() ? "PNG write failed" : error));
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

GrayImage read_image(const fs::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".pgm") {
        return read_pgm(path);
    }
    if (ext == ".png") {
        return read_png(path);
    }
    throw std::runtime_error(path.string() + ": unsupported image extension (expected .pgm or .png)");
}

void write_image(const fs::path& path, const Tensor& pixels) {
    const auto ext = path.extension().string();
    if (ext == ".pgm") {
        write_pgm(path, pixels);
    } else if (ext == ".png") {
        write_png(path, pixels);
    } else {
        throw std::runtime_error(path.string() + ": unsupported image extension (expected .pgm or .png)");
    }
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
    require_image(image, "resize_bilinear");
    if (height == 0 || width == 0) {
        throw ShapeError("resize_bilinear: target extents must be positive");
    }
    const std::size_t h = image.dim(0);
    const std::size_t w = image.dim(1);
    if (h == height && w == width) {
        return image;
    }
    auto axis = [](std::size_t out, std::size_t in, std::size_t i, std::size_t& i0, std::size_t& i1, double& f) {
        const double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        const double c = std::clamp(src, 0.0, static_cast<double>(in - 1));
        i0 = static_cast<std::size_t>(std::floor(c));
        i1 = std::min(i0 + 1, in - 1);
        f = c - static_cast<double>(i0);
    };
    Tensor out(Shape{height, width});
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t y0, y1;
        double fy;
        axis(height, h, y, y0, y1, fy);
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t x0, x1;
            double fx;
            axis(width, w, x, x0, x1, fx);
            const double top = (1 - fx) * image[y0 * w + x0] + fx * image[y0 * w + x1];
            const double bottom = (1 - fx) * image[y1 * w + x0] + fx * image[y1 * w + x1];
            out[y * width + x] = static_cast<float>((1 - fy) * top + fy * bottom);
        }
    }
    return out;
}

namespace {

// "target" alone, or target_0, target_1, ... without gaps.
std::vector<fs::path> channel_dirs(const fs::path& root, const std::string& prefix) {
    if (fs::is_directory(root / prefix)) {
        return {root / prefix};
    }
    std::vector<fs::path> dirs;
    for (std::size_t k = 0; fs::is_directory(root / (prefix + "_" + std::to_string(k))); ++k) {
        dirs.push_back(root / (prefix + "_" + std::to_string(k)));
    }
    return dirs;
}

std::vector<std::string> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DatasetError({"missing or unreadable manifest " + path.string()});
    }
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
            line.pop_back();
        }
        if (!line.empty()) {
            ids.push_back(line);
        }
    }
    return ids;
}

}  // namespace

Dataset load_image_dir(const fs::path& root, const ImageDirLayout& layout) {
    const auto ids = read_manifest(root / "manifest.txt");
    const auto target_dirs = channel_dirs(root, "target");
    const auto cond_dirs = channel_dirs(root, "cond");
    std::vector<std::string> problems;
    if (target_dirs.empty()) {
        problems.push_back("no target/ or target_0/ directory under " + root.string());
    }
    if (cond_dirs.empty()) {
        problems.push_back("no cond/ or cond_0/ directory under " + root.string());
    }
    if (ids.empty()) {
        problems.push_back("manifest lists no ids");
    }
    if (!problems.empty()) {
        throw DatasetError(std::move(problems));
    }

    std::set<int> depths;
    std::vector<PairSample> samples;
    Shape native;
    for (const auto& id : ids) {
        auto load_stack = [&](const std::vector<fs::path>& dirs, Tensor& out) {
            std::vector<Tensor> planes;
            bool ok = true;
            for (const auto& dir : dirs) {
                fs::path file;
                for (const char* ext : {".pgm", ".png"}) {
                    if (fs::exists(dir / (id + ext))) {
                        file = dir / (id + ext);
                        break;
                    }
                }
                if (file.empty()) {
                    problems.push_back("missing pair member " + (dir / id).string() + ".{pgm,png}");
                    ok = false;
                    continue;
                }
                try {
                    auto img = read_image(file);
                    depths.insert(img.bit_depth);
                    if (layout.image_size != 0) {
                        img.pixels = resize_bilinear(img.pixels, layout.image_size, layout.image_size);
                    } else if (native.empty()) {
                        native = img.pixels.shape();
                    } else if (img.pixels.shape() != native) {
                        problems.push_back(file.string() + ": size " + shape_to_string(img.pixels.shape()) +
                                           " differs from " + shape_to_string(native) + " (set an image size)");
                        ok = false;
                        continue;
                    }
                    planes.push_back(std::move(img.pixels));
                } catch (const std::exception& e) {
                    problems.push_back(std::string("unreadable file: ") + e.what());
                    ok = false;
                }
            }
            if (!ok) {
                return false;
            }
            const std::size_t h = planes.front().dim(0);
            const std::size_t w = planes.front().dim(1);
            out = Tensor(Shape{planes.size(), h, w});
            for (std::size_t k = 0; k < planes.size(); ++k) {
                std::copy_n(planes[k].raw(), h * w, out.raw() + k * h * w);
            }
            return true;
        };
        PairSample s;
        s.id = id;
        const bool ok_target = load_stack(target_dirs, s.x0);
        const bool ok_cond = load_stack(cond_dirs, s.c);
        if (ok_target && ok_cond) {
            samples.push_back(std::move(s));
        }
    }
    if (depths.size() > 1) {
        problems.push_back("mixed bit depths: files use both 8-bit and 16-bit samples");
    }
    Dataset out;
    if (problems.empty()) {
        for (auto& s : samples) {
            try {
                out.add(std::move(s));
            } catch (const std::exception& e) {
                problems.push_back(e.what());
            }
        }
    }
    if (!problems.empty()) {
        throw DatasetError(std::move(problems));
    }
    return out;
}

void save_dataset(const fs::path& root, const Dataset& dataset) {
    if (dataset.empty()) {
        throw std::invalid_argument("save_dataset: empty dataset");
    }
    auto dirs_for = [&](const std::string& prefix, std::size_t channels) {
        std::vector<fs::path> dirs;
        if (channels == 1) {
            dirs.push_back(root / prefix);
        } else {
            for (std::size_t k = 0; k < channels; ++k) {
                dirs.push_back(root / (prefix + "_" + std::to_string(k)));
            }
        }
        for (const auto& d : dirs) {
            fs::create_directories(d);
        }
        return dirs;
    };
    const auto target_dirs = dirs_for("target", dataset.target_shape()[0]);
    const auto cond_dirs = dirs_for("cond", dataset.cond_shape()[0]);
    std::ofstream manifest(root / "manifest.txt");
    if (!manifest) {
        throw std::runtime_error((root / "manifest.txt").string() + ": cannot open for writing");
    }
    auto write_stack = [](const Tensor& t, const std::vector<fs::path>& dirs, const std::string& id) {
        const std::size_t h = t.dim(1);
        const std::size_t w = t.dim(2);
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            Tensor plane(Shape{h, w});
            std::copy_n(t.raw() + k * h * w, h * w, plane.raw());
            write_pgm(dirs[k] / (id + ".pgm"), plane);
        }
    };
    for (const auto& s : dataset.samples()) {
        manifest << s.id << '\n';
        write_stack(s.x0, target_dirs, s.id);
        write_stack(s.c, cond_dirs, s.id);
    }
}

}  // namespace fastdiff
