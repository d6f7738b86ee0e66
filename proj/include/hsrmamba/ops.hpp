#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

enum class BinaryKind { add, sub, mul, div };
enum class UnaryKind { exp, sigmoid, silu, softplus, relu, neg, abs };

namespace detail {

template <class T>
T sigmoid(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <class T>
T softplus(T x) {
    if (x > T{20}) return x;
    return std::log1p(std::exp(x));
}

/// Sums `g` (shaped like the broadcast output) into `acc` (an operand shape).
template <class T>
void accumulate_reduced(const Tensor<T>& g, Tensor<T>& acc) {
    if (g.shape() == acc.shape()) {
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        return;
    }
    if (acc.size() == 1) {
        T s{0};
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
        acc[0] += s;
        return;
    }
    const auto idx = broadcast_index(g.shape(), acc.shape());
    for (std::size_t i = 0; i < g.size(); ++i) acc[idx[i]] += g[i];
}

}  // namespace detail

/// Elementwise binary op with right-aligned broadcasting.
template <class T>
Var<T> binary(BinaryKind kind, const Var<T>& a, const Var<T>& b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const std::size_t n = shape_size(out_shape);
    const bool same_a = a.shape() == out_shape;
    const bool same_b = b.shape() == out_shape;
    std::vector<std::size_t> ia, ib;
    if (!same_a) ia = broadcast_index(out_shape, a.shape());
    if (!same_b) ib = broadcast_index(out_shape, b.shape());

    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor<T> out(out_shape);
    if (kind == BinaryKind::div) {
        for (std::size_t i = 0; i < bv.size(); ++i)
            if (bv[i] == T{0}) throw NumericError("div: zero divisor at element " + std::to_string(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const T x = av[same_a ? i : ia[i]];
        const T y = bv[same_b ? i : ib[i]];
        switch (kind) {
            case BinaryKind::add: out[i] = x + y; break;
            case BinaryKind::sub: out[i] = x - y; break;
            case BinaryKind::mul: out[i] = x * y; break;
            case BinaryKind::div: out[i] = x / y; break;
        }
    }

    return make_op<T>(std::move(out), {a, b},
        [kind, a, b, out_shape](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const auto& av = a.value();
            const auto& bv = b.value();
            const bool need_a = gin[0] != nullptr, need_b = gin[1] != nullptr;
            if (kind == BinaryKind::add || kind == BinaryKind::sub) {
                if (need_a) detail::accumulate_reduced(g, *gin[0]);
                if (need_b) {
                    if (kind == BinaryKind::add) {
                        detail::accumulate_reduced(g, *gin[1]);
                    } else {
                        Tensor<T> ng = g;
                        for (auto& v : ng.data()) v = -v;
                        detail::accumulate_reduced(ng, *gin[1]);
                    }
                }
                return;
            }
            const bool same_a = av.shape() == out_shape, same_b = bv.shape() == out_shape;
            std::vector<std::size_t> ia, ib;
            if (!same_a) ia = broadcast_index(out_shape, av.shape());
            if (!same_b) ib = broadcast_index(out_shape, bv.shape());
            Tensor<T> ga, gb;
            if (need_a) ga = Tensor<T>(out_shape);
            if (need_b) gb = Tensor<T>(out_shape);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T x = av[same_a ? i : ia[i]];
                const T y = bv[same_b ? i : ib[i]];
                if (kind == BinaryKind::mul) {
                    if (need_a) ga[i] = g[i] * y;
                    if (need_b) gb[i] = g[i] * x;
                } else {
                    if (need_a) ga[i] = g[i] / y;
                    if (need_b) gb[i] = -g[i] * x / (y * y);
                }
            }
            if (need_a) detail::accumulate_reduced(ga, *gin[0]);
            if (need_b) detail::accumulate_reduced(gb, *gin[1]);
        },
        "binary");
}

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b) { return binary(BinaryKind::add, a, b); }
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b) { return binary(BinaryKind::sub, a, b); }
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b) { return binary(BinaryKind::mul, a, b); }
template <class T> Var<T> div(const Var<T>& a, const Var<T>& b) { return binary(BinaryKind::div, a, b); }

template <class T>
Var<T> unary(UnaryKind kind, const Var<T>& a) {
    const auto& av = a.value();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const T x = av[i];
        switch (kind) {
            case UnaryKind::exp: out[i] = std::exp(x); break;
            case UnaryKind::sigmoid: out[i] = detail::sigmoid(x); break;
            case UnaryKind::silu: out[i] = x * detail::sigmoid(x); break;
            case UnaryKind::softplus: out[i] = detail::softplus(x); break;
            case UnaryKind::relu: out[i] = x > T{0} ? x : T{0}; break;
            case UnaryKind::neg: out[i] = -x; break;
            case UnaryKind::abs: out[i] = std::abs(x); break;
        }
    }
    return make_op<T>(std::move(out), {a},
        [kind, a](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            const auto& av = a.value();
            auto& ga = *gin[0];
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T x = av[i];
                T d{0};
                switch (kind) {
                    case UnaryKind::exp: d = std::exp(x); break;
                    case UnaryKind::sigmoid: {
                        const T s = detail::sigmoid(x);
                        d = s * (T{1} - s);
                        break;
                    }
                    case UnaryKind::silu: {
                        const T s = detail::sigmoid(x);
                        d = s * (T{1} + x * (T{1} - s));
                        break;
                    }
                    case UnaryKind::softplus: d = detail::sigmoid(x); break;
                    case UnaryKind::relu: d = x > T{0} ? T{1} : T{0}; break;
                    case UnaryKind::neg: d = T{-1}; break;
                    case UnaryKind::abs: d = x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0}); break;
                }
                ga[i] += g[i] * d;
            }
        },
        "unary");
}

template <class T> Var<T> exp(const Var<T>& a) { return unary(UnaryKind::exp, a); }
template <class T> Var<T> sigmoid(const Var<T>& a) { return unary(UnaryKind::sigmoid, a); }
template <class T> Var<T> silu(const Var<T>& a) { return unary(UnaryKind::silu, a); }
template <class T> Var<T> softplus(const Var<T>& a) { return unary(UnaryKind::softplus, a); }
template <class T> Var<T> relu(const Var<T>& a) { return unary(UnaryKind::relu, a); }
template <class T> Var<T> neg(const Var<T>& a) { return unary(UnaryKind::neg, a); }
template <class T> Var<T> abs(const Var<T>& a) { return unary(UnaryKind::abs, a); }

/// y = k * a + c, for constants k and c.
template <class T>
Var<T> affine(const Var<T>& a, T k, T c = T{0}) {
    Tensor<T> out(a.shape());
    const auto& av = a.value();
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = k * av[i] + c;
    return make_op<T>(std::move(out), {a},
        [k](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += k * g[i];
        },
        "affine");
}

template <class T>
Var<T> scale(const Var<T>& a, T k) { return affine(a, k); }

/// Matrix product of rank-2 tensors.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ContractError("matmul: operands must be rank 2, got " + to_string(a.shape()) + " and " +
                            to_string(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ContractError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                            to_string(b.shape()));
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        T* orow = &out[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = av[i * k + p];
            const T* brow = &bv[p * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return make_op<T>(std::move(out), {a, b},
        [a, b, m, k, n](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const auto& av = a.value();
            const auto& bv = b.value();
            if (gin[0]) {  // dA = G * B^T
                auto& ga = *gin[0];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        T s{0};
                        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                        ga[i * k + p] += s;
                    }
            }
            if (gin[1]) {  // dB = A^T * G
                auto& gb = *gin[1];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const T aip = av[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                    }
            }
        },
        "matmul");
}

enum class ReduceKind { sum, mean };

/// Reduces over `axes`; the reduced dims are dropped. Reducing every axis gives shape {1}.
template <class T>
Var<T> reduce(ReduceKind kind, const Var<T>& a, const std::vector<std::size_t>& axes) {
    const Shape& in = a.shape();
    std::set<std::size_t> ax(axes.begin(), axes.end());
    if (ax.size() != axes.size()) throw ContractError("reduce: duplicate axes");
    for (auto x : ax)
        if (x >= in.size()) throw ContractError("reduce: axis " + std::to_string(x) + " out of range for " + to_string(in));

    Shape kept = in;  // reduced dims set to 1
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t d = 0; d < in.size(); ++d) {
        if (ax.count(d)) {
            kept[d] = 1;
            count *= in[d];
        } else {
            out_shape.push_back(in[d]);
        }
    }
    if (out_shape.empty()) out_shape = {1};

    const auto idx = broadcast_index(in, kept);
    Tensor<T> out(out_shape);
    const auto& av = a.value();
    for (std::size_t i = 0; i < av.size(); ++i) out[idx[i]] += av[i];
    const T factor = kind == ReduceKind::mean ? T{1} / static_cast<T>(count) : T{1};
    if (kind == ReduceKind::mean)
        for (auto& v : out.data()) v *= factor;

    return make_op<T>(std::move(out), {a},
        [in, kept, factor](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            const auto idx = broadcast_index(in, kept);
            auto& ga = *gin[0];
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[idx[i]];
        },
        "reduce");
}

template <class T>
std::vector<std::size_t> all_axes(const Var<T>& a) {
    std::vector<std::size_t> ax(a.shape().size());
    for (std::size_t i = 0; i < ax.size(); ++i) ax[i] = i;
    return ax;
}

template <class T> Var<T> sum(const Var<T>& a) { return reduce(ReduceKind::sum, a, all_axes(a)); }
template <class T> Var<T> mean(const Var<T>& a) { return reduce(ReduceKind::mean, a, all_axes(a)); }

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
    if (shape_size(s) != a.size())
        throw ContractError("reshape: " + to_string(a.shape()) + " -> " + to_string(s) + " changes element count");
    return make_op<T>(a.value().reshaped(std::move(s)), {a},
        [](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
        },
        "reshape");
}

/// Channels [begin, begin + count) of a tensor whose leading axis is channels.
template <class T>
Var<T> slice_channels(const Var<T>& a, std::size_t begin, std::size_t count) {
    const Shape& in = a.shape();
    if (count == 0 || begin + count > in[0])
        throw ContractError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                            ") out of range for " + to_string(in));
    const std::size_t plane = a.size() / in[0];
    Shape out_shape = in;
    out_shape[0] = count;
    const auto& av = a.value();
    std::vector<T> data(av.vec().begin() + static_cast<std::ptrdiff_t>(begin * plane),
                        av.vec().begin() + static_cast<std::ptrdiff_t>((begin + count) * plane));
    return make_op<T>(Tensor<T>(out_shape, std::move(data)), {a},
        [begin, plane](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            auto& ga = *gin[0];
            for (std::size_t i = 0; i < g.size(); ++i) ga[begin * plane + i] += g[i];
        },
        "slice_channels");
}

/// Concatenation along the leading (channel) axis; trailing dims must agree.
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat_channels: no inputs");
    Shape out_shape = parts[0].shape();
    std::size_t channels = 0;
    for (const auto& p : parts) {
        Shape tail(p.shape().begin() + 1, p.shape().end());
        Shape first_tail(out_shape.begin() + 1, out_shape.end());
        if (tail != first_tail) throw ContractError("concat_channels: trailing dims differ");
        channels += p.dim(0);
    }
    out_shape[0] = channels;
    std::vector<T> data;
    data.reserve(shape_size(out_shape));
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(data.size());
        data.insert(data.end(), p.value().vec().begin(), p.value().vec().end());
    }
    return make_op<T>(Tensor<T>(out_shape, std::move(data)), parts,
        [offsets](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            for (std::size_t k = 0; k < gin.size(); ++k) {
                if (!gin[k]) continue;
                auto& gk = *gin[k];
                for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
            }
        },
        "concat_channels");
}

/// Reflect-index into [0, n): ... 2 1 | 0 1 2 ... n-1 | n-2 ... without repeating the edge.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - i);
}

/// Extends a C x H x W tensor by reflection on the bottom and right edges.
template <class T>
Var<T> pad_reflect_end(const Var<T>& a, std::size_t pad_h, std::size_t pad_w) {
    require(a.shape().size() == 3, "pad_reflect_end: expected C x H x W");
    const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
    const std::size_t Ho = H + pad_h, Wo = W + pad_w;
    std::vector<std::size_t> src(Ho * Wo);
    for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t x = 0; x < Wo; ++x)
            src[y * Wo + x] = reflect_index(static_cast<std::ptrdiff_t>(y), H) * W +
                              reflect_index(static_cast<std::ptrdiff_t>(x), W);
    Tensor<T> out({C, Ho, Wo});
    const auto& av = a.value();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < Ho * Wo; ++i) out[c * Ho * Wo + i] = av[c * H * W + src[i]];
    return make_op<T>(std::move(out), {a},
        [src, C, H, W, Ho, Wo](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            auto& ga = *gin[0];
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < Ho * Wo; ++i) ga[c * H * W + src[i]] += g[c * Ho * Wo + i];
        },
        "pad_reflect_end");
}

/// Top-left H x W window of a C x H' x W' tensor.
template <class T>
Var<T> crop(const Var<T>& a, std::size_t H, std::size_t W) {
    require(a.shape().size() == 3 && a.dim(1) >= H && a.dim(2) >= W, "crop: window larger than input");
    const std::size_t C = a.dim(0), Hi = a.dim(1), Wi = a.dim(2);
    Tensor<T> out({C, H, W});
    const auto& av = a.value();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out.at(c, y, x) = av.at(c, y, x);
    return make_op<T>(std::move(out), {a},
        [C, H, W, Hi, Wi](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            auto& ga = *gin[0];
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < H; ++y)
                    for (std::size_t x = 0; x < W; ++x) ga[(c * Hi + y) * Wi + x] += g[(c * H + y) * W + x];
        },
        "crop");
}

}  // namespace hsr
