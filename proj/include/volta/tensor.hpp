#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "volta/error.hpp"

namespace volta {

/// Extents of a rank-4 tensor in (batch, channel, row, column) order.
struct Shape4 {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    constexpr std::size_t count() const noexcept { return n * c * h * w; }
    constexpr std::size_t per_sample() const noexcept { return c * h * w; }
    constexpr std::size_t plane() const noexcept { return h * w; }

    constexpr std::size_t index(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) const noexcept
    {
        return ((in * c + ic) * h + ih) * w + iw;
    }

    constexpr std::array<std::size_t, 4> decode(std::size_t flat) const noexcept
    {
        const std::size_t iw = flat % w;
        flat /= w;
        const std::size_t ih = flat % h;
        flat /= h;
        const std::size_t ic = flat % c;
        return {flat / c, ic, ih, iw};
    }

    friend constexpr bool operator==(const Shape4&, const Shape4&) = default;
};

inline std::string to_string(const Shape4& s)
{
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + ")";
}

/// Dense row-major NCHW tensor. Owns a contiguous buffer whose length always
/// equals shape().count().
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape4 shape, T value = T{}) : shape_(shape), data_(shape.count(), value) {}

    BasicTensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data))
    {
        if (data_.size() != shape_.count()) {
            throw ShapeError("tensor buffer of " + std::to_string(data_.size()) + " elements does not match shape " +
                             to_string(shape_));
        }
    }

    static BasicTensor filled(Shape4 shape, T value) { return BasicTensor(shape, value); }

    const Shape4& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept
    {
        return data_[shape_.index(n, c, h, w)];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept
    {
        return data_[shape_.index(n, c, h, w)];
    }

    /// One sample's contiguous (c, h, w) block.
    std::span<T> sample(std::size_t n) noexcept { return {data_.data() + n * shape_.per_sample(), shape_.per_sample()}; }
    std::span<const T> sample(std::size_t n) const noexcept
    {
        return {data_.data() + n * shape_.per_sample(), shape_.per_sample()};
    }

    void reshape(Shape4 shape)
    {
        if (shape.count() != shape_.count()) {
            throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        }
        shape_ = shape;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    BasicTensor<U> cast() const
    {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return BasicTensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    Shape4 shape_{};
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
BasicTensor<T> new_filled(Shape4 shape, T value)
{
    return BasicTensor<T>(shape, value);
}

/// Zero border of width `pad` around every (n, c) plane.
template <typename T>
BasicTensor<T> pad_spatial(const BasicTensor<T>& t, std::size_t pad)
{
    if (pad == 0) return t;
    const Shape4 in = t.shape();
    const Shape4 out{in.n, in.c, in.h + 2 * pad, in.w + 2 * pad};
    BasicTensor<T> result(out);
    for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t h = 0; h < in.h; ++h) {
                const T* src = &t.at(n, c, h, 0);
                std::copy(src, src + in.w, &result.at(n, c, h + pad, pad));
            }
    return result;
}

/// Inverse of pad_spatial: drops a border of width `pad`.
template <typename T>
BasicTensor<T> crop_spatial(const BasicTensor<T>& t, std::size_t pad)
{
    if (pad == 0) return t;
    const Shape4 in = t.shape();
    if (in.h < 2 * pad || in.w < 2 * pad) {
        throw ShapeError("cannot crop " + std::to_string(pad) + " from " + to_string(in));
    }
    const Shape4 out{in.n, in.c, in.h - 2 * pad, in.w - 2 * pad};
    BasicTensor<T> result(out);
    for (std::size_t n = 0; n < out.n; ++n)
        for (std::size_t c = 0; c < out.c; ++c)
            for (std::size_t h = 0; h < out.h; ++h) {
                const T* src = &t.at(n, c, h + pad, pad);
                std::copy(src, src + out.w, &result.at(n, c, h, 0));
            }
    return result;
}

template <typename T>
BasicTensor<T> flatten_to_rows(BasicTensor<T> t)
{
    const Shape4 s = t.shape();
    t.reshape({s.n, s.per_sample(), 1, 1});
    return t;
}

/// Gathers the listed samples into a new batch, in the given order.
template <typename T>
BasicTensor<T> gather_samples(const BasicTensor<T>& t, std::span<const std::size_t> rows)
{
    const Shape4 s = t.shape();
    BasicTensor<T> out({rows.size(), s.c, s.h, s.w});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= s.n) throw ShapeError("sample index " + std::to_string(rows[i]) + " out of range " + to_string(s));
        const auto src = t.sample(rows[i]);
        std::copy(src.begin(), src.end(), out.sample(i).begin());
    }
    return out;
}

}  // namespace volta
