#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hsrmamba/errors.hpp"

namespace hsr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

/// Row-major strides in elements.
inline std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i > 1; --i) st[i - 2] = st[i - 1] * s[i - 1];
    return st;
}

/// Right-aligned broadcast: each pair of aligned dims must match or one must be 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ContractError("cannot broadcast " + to_string(a) + " with " + to_string(b));
        out[i] = std::max(da, db);
    }
    return out;
}

/// For every flat index of `out`, the flat index into an operand of shape `in`
/// that broadcasts to it.
inline std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& in) {
    const std::size_t n = out.size();
    const std::size_t lead = n - in.size();
    std::vector<std::size_t> in_stride(n, 0);
    const auto st = strides_of(in);
    for (std::size_t i = lead; i < n; ++i)
        in_stride[i] = in[i - lead] == 1 ? 0 : st[i - lead];

    std::vector<std::size_t> idx(shape_size(out));
    std::vector<std::size_t> counter(n, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < idx.size(); ++flat) {
        idx[flat] = offset;
        for (std::size_t d = n; d-- > 0;) {
            ++counter[d];
            offset += in_stride[d];
            if (counter[d] < out[d]) break;
            offset -= in_stride[d] * counter[d];
            counter[d] = 0;
        }
    }
    return idx;
}

/// Dense row-major array. Shapes hold positive extents; a scalar has shape {1}.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (shape_size(shape_) != data_.size())
            throw ContractError("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + to_string(shape_));
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Channel-major accessor for rank-3 tensors.
    T& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    const T& at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    T item() const {
        if (data_.size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape s) const& { return Tensor(std::move(s), data_); }
    Tensor reshaped(Shape s) && { return Tensor(std::move(s), std::move(data_)); }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_shape() const {
        if (shape_.empty()) throw ContractError("tensor shape must have at least one dimension");
        for (auto d : shape_)
            if (d == 0) throw ContractError("tensor extents must be positive, got " + to_string(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Largest absolute elementwise difference; shapes must agree.
template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "max_abs_diff: shape mismatch");
    T m{0};
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace hsr
