// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "manet/common.hpp"
#include "manet/rng.hpp"

namespace manet {

/// Dense n-dimensional array, row-major, contiguous.
///
/// Invariants: every extent is >= 1 and product(shape) == data.size().
template <std::floating_point T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), T(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size()) {
            std::ostringstream os;
            os << "tensor: data length " << data_.size() << " does not match shape product "
               << checked_size(shape_);
            throw ShapeError(os.str());
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    /// Gaussian entries, mean 0, given stddev.
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.normal() * stddev);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at3(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    const T& at3(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    T& at4(std::size_t o, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((o * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    const T& at4(std::size_t o, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((o * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << "]";
        return os.str();
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (shape[i] == 0) {
                throw ShapeError("tensor: extent " + std::to_string(i) + " is zero; all extents must be >= 1");
            }
            n *= shape[i];
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

template <std::floating_point T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = std::abs(a[i] - b[i]);
        if (d > m) m = d;
    }
    return m;
}

template <std::floating_point T>
T sum(const Tensor<T>& a) {
    T s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

} // namespace manet
