#pragma once

#include <cstddef>
#include <string>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/ops.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

/// One Haar level: low = LL [C x H/2 x W/2], high = [LH | HL | HH] [3C x H/2 x W/2].
template <class T>
struct WaveletPair {
    Var<T> low;
    Var<T> high;
};

enum class WaveletFamily { haar };

namespace detail {

// Orthonormal 2x2 Haar butterfly on a block (a b; c d).
template <class T>
inline void haar_analysis(T a, T b, T c, T d, T& ll, T& lh, T& hl, T& hh) {
    const T half = T(0.5);
    ll = (a + b + c + d) * half;
    lh = (a - b + c - d) * half;
    hl = (a + b - c - d) * half;
    hh = (a - b - c + d) * half;
}

template <class T>
inline void haar_synthesis(T ll, T lh, T hl, T hh, T& a, T& b, T& c, T& d) {
    const T half = T(0.5);
    a = (ll + lh + hl + hh) * half;
    b = (ll - lh + hl - hh) * half;
    c = (ll + lh - hl - hh) * half;
    d = (ll - lh - hl + hh) * half;
}

/// x[C x H x W] -> [4C x H/2 x W/2] laid out as LL | LH | HL | HH.
template <class T>
Tensor<T> haar_forward(const Tensor<T>& x) {
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), h = H / 2, w = W / 2;
    Tensor<T> out({4 * C, h, w});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t z = 0; z < w; ++z)
                haar_analysis(x.at(c, 2 * y, 2 * z), x.at(c, 2 * y, 2 * z + 1), x.at(c, 2 * y + 1, 2 * z),
                              x.at(c, 2 * y + 1, 2 * z + 1), out.at(c, y, z), out.at(C + c, y, z),
                              out.at(2 * C + c, y, z), out.at(3 * C + c, y, z));
    return out;
}

/// [4C x h x w] (LL | LH | HL | HH) -> [C x 2h x 2w].
template <class T>
Tensor<T> haar_inverse(const Tensor<T>& s) {
    const std::size_t C = s.dim(0) / 4, h = s.dim(1), w = s.dim(2);
    Tensor<T> out({C, 2 * h, 2 * w});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t z = 0; z < w; ++z)
                haar_synthesis(s.at(c, y, z), s.at(C + c, y, z), s.at(2 * C + c, y, z), s.at(3 * C + c, y, z),
                               out.at(c, 2 * y, 2 * z), out.at(c, 2 * y, 2 * z + 1), out.at(c, 2 * y + 1, 2 * z),
                               out.at(c, 2 * y + 1, 2 * z + 1));
    return out;
}

template <class T>
void add_into(Tensor<T>& acc, const Tensor<T>& v) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

}  // namespace detail

/// Single-level orthonormal Haar analysis. H and W must be even.
template <class T>
WaveletPair<T> dwt_haar(const Var<T>& x) {
    if (x.shape().size() != 3) throw ContractError("dwt_haar: expected C x H x W, got " + to_string(x.shape()));
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % 2 != 0 || W % 2 != 0)
        throw ContractError("dwt_haar: spatial dims must be even, got " + std::to_string(H) + "x" + std::to_string(W));
    // The butterfly is orthonormal and symmetric, so its adjoint is the synthesis.
    auto bands = make_op<T>(detail::haar_forward(x.value()), {x},
        [](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (gin[0]) detail::add_into(*gin[0], detail::haar_inverse(g));
        },
        "dwt_haar");
    return {slice_channels(bands, 0, C), slice_channels(bands, C, 3 * C)};
}

/// Exact inverse of dwt_haar.
template <class T>
Var<T> iwt_haar(const WaveletPair<T>& p) {
    require(p.low.shape().size() == 3 && p.high.shape().size() == 3, "iwt_haar: expected rank-3 bands");
    const std::size_t C = p.low.dim(0);
    if (p.high.dim(0) != 3 * C)
        throw ContractError("iwt_haar: high band has " + std::to_string(p.high.dim(0)) + " channels, expected " +
                            std::to_string(3 * C));
    require(p.high.dim(1) == p.low.dim(1) && p.high.dim(2) == p.low.dim(2), "iwt_haar: band extents differ");
    auto stacked = concat_channels<T>({p.low, p.high});
    return make_op<T>(detail::haar_inverse(stacked.value()), {stacked},
        [](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (gin[0]) detail::add_into(*gin[0], detail::haar_forward(g));
        },
        "iwt_haar");
}

template <class T>
Var<T> iwt_haar(const Var<T>& low, const Var<T>& high) {
    return iwt_haar(WaveletPair<T>{low, high});
}

}  // namespace hsr
