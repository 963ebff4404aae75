// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastdiff/tensor.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "fastdiff/binary_io.hpp"

namespace fastdiff {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

template <class T>
constexpr DType dtype_of() {
    if constexpr (std::is_same_v<T, float>) {
        return DType::Float32;
    } else {
        return DType::Float64;
    }
}

template <class Stored, class T>
std::vector<T> read_elements(std::istream& in, std::size_t n) {
    std::vector<T> out(n);
    for (auto& v : out) {
        v = static_cast<T>(binary::get<Stored>(in));
    }
    return out;
}

}  // namespace

template <class T>
void write_tensor(std::ostream& out, const BasicTensor<T>& tensor) {
    binary::put_magic(out, "FDT1");
    binary::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape()) {
        binary::put<std::uint64_t>(out, extent);
    }
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(tensor.raw()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(T)));
    } else {
        for (auto v : tensor.data()) {
            binary::put<T>(out, v);
        }
    }
}

template <class T>
BasicTensor<T> read_tensor(std::istream& in) {
    binary::expect_magic(in, "FDT1");
    const auto code = binary::get<std::uint8_t>(in);
    const auto rank = binary::get<std::uint32_t>(in);
    if (rank > 8) {
        throw binary::FormatError("tensor rank " + std::to_string(rank) + " exceeds limit");
    }
    Shape shape(rank);
    for (auto& extent : shape) {
        extent = binary::get<std::uint64_t>(in);
    }
    const auto n = shape_size(shape);
    if (n > (std::size_t{1} << 32)) {
        throw binary::FormatError("tensor record too large");
    }
    switch (static_cast<DType>(code)) {
        case DType::Float32:
            return BasicTensor<T>(std::move(shape), read_elements<float, T>(in, n));
        case DType::Float64:
            return BasicTensor<T>(std::move(shape), read_elements<double, T>(in, n));
    }
    throw binary::FormatError("unknown tensor dtype code " + std::to_string(code));
}

template void write_tensor(std::ostream&, const BasicTensor<float>&);
template void write_tensor(std::ostream&, const BasicTensor<double>&);
template BasicTensor<float> read_tensor(std::istream&);
template BasicTensor<double> read_tensor(std::istream&);

}  // namespace fastdiff
