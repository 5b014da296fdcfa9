#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stnas/errors.hpp"

namespace stnas {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor. Element type is float for ordinary runs and double
// for gradient-check / NTK work.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) { resize(std::move(shape)); }

    Tensor(Shape shape, T fill_value) {
        resize(std::move(shape));
        fill(fill_value);
    }

    void resize(Shape shape) {
        for (std::int64_t d : shape) {
            if (d < 1) throw ConfigError("tensor dimension must be >= 1, got shape " + shape_str(shape));
        }
        shape_ = std::move(shape);
        data_.assign(static_cast<std::size_t>(shape_numel(shape_)), T{0});
    }

    // Resize without clearing when the element count is unchanged.
    void resize_as(const Shape& shape) {
        if (shape == shape_) return;
        if (shape_numel(shape) == numel() && !shape_.empty()) {
            shape_ = shape;
            return;
        }
        resize(shape);
    }

    const Shape& shape() const noexcept { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& vec() noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T{0}); }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.resize(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

}  // namespace stnas
