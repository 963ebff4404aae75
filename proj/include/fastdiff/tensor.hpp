// Copyright (C) 2026 The fastdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <new>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fastdiff {

using Shape = std::vector<std::size_t>;

/// Thrown when operand extents are incompatible with an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// 64-byte aligned allocator. Vectorized kernels peel unaligned heads with
/// scalar code, so a fixed alignment keeps results independent of where the
/// allocator places a buffer.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major array. Value semantics; copying copies the data.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    BasicTensor(Shape shape, const std::vector<T>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        check_length();
    }

    BasicTensor(Shape shape, std::initializer_list<T> data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        check_length();
    }

    BasicTensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_length();
    }

    static BasicTensor scalar(T value) { return BasicTensor(Shape{}, AlignedVector<T>{value}); }


    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Element access for rank-4 [N,C,H,W] tensors.
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    T item() const {
        if (data_.size() != 1) {
            throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
        }
        return data_[0];
    }

    BasicTensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
        }
        return BasicTensor(std::move(shape), data_);
    }

    template <class U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool operator==(const BasicTensor& other) const = default;

private:
    void check_length() const {
        if (data_.size() != shape_size(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_to_string(shape_));
        }
    }

    Shape shape_;
    AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Dtype codes used by the binary tensor record.
enum class DType : std::uint8_t { Float32 = 1, Float64 = 2 };

// Binary record layout (little-endian):
//   "FDT1" | u8 dtype | u32 rank | u64 extents[rank] | raw element data
template <class T>
void write_tensor(std::ostream& out, const BasicTensor<T>& tensor);

/// Reads one record; converts to T when the stored dtype differs.
template <class T>
BasicTensor<T> read_tensor(std::istream& in);

}  // namespace fastdiff
