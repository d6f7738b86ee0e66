#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

enum class ScanKind { raster, window, stripe };

inline std::string to_string(ScanKind k) {
    switch (k) {
        case ScanKind::raster: return "raster";
        case ScanKind::window: return "window";
        case ScanKind::stripe: return "stripe";
    }
    return "?";
}

inline ScanKind parse_scan_kind(const std::string& s) {
    if (s == "raster" || s == "global") return ScanKind::raster;
    if (s == "window") return ScanKind::window;
    if (s == "stripe") return ScanKind::stripe;
    throw ContractError("unknown scan kind '" + s + "' (expected stripe, raster or window)");
}

/// Bijection between sequence positions and flat grid indices (y * W + x).
/// perm[t] is the grid cell visited at step t; inv[cell] is its step.
struct ScanOrder {
    std::size_t height = 0;
    std::size_t width = 0;
    ScanKind kind = ScanKind::raster;
    std::size_t param = 0;  // stripe length or window side; 0 for raster
    int direction = 0;
    std::vector<std::uint32_t> perm;
    std::vector<std::uint32_t> inv;

    std::size_t length() const noexcept { return perm.size(); }
};

namespace detail {

inline void check_grid(std::size_t H, std::size_t W, int direction) {
    require(H >= 1 && W >= 1, "scan order: grid extents must be >= 1");
    require(direction >= 0 && direction <= 3, "scan order: direction must be in 0..3");
}

inline ScanOrder finish_order(ScanOrder o) {
    if (o.direction == 1 || o.direction == 3) std::reverse(o.perm.begin(), o.perm.end());
    o.inv.assign(o.perm.size(), 0);
    for (std::size_t t = 0; t < o.perm.size(); ++t) o.inv[o.perm[t]] = static_cast<std::uint32_t>(t);
    return o;
}

/// Visits a (rows x cols) grid in blocks of (block_r x block_c): blocks row-major,
/// cells row-major within a block. `cell(r, c)` maps to the output index.
template <class Cell>
void blocked_traversal(std::vector<std::uint32_t>& out, std::size_t rows, std::size_t cols, std::size_t block_r,
                       std::size_t block_c, Cell cell) {
    for (std::size_t r0 = 0; r0 < rows; r0 += block_r)
        for (std::size_t c0 = 0; c0 < cols; c0 += block_c) {
            const std::size_t r1 = std::min(r0 + block_r, rows);
            const std::size_t c1 = std::min(c0 + block_c, cols);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) out.push_back(cell(r, c));
        }
}

inline ScanOrder blocked_order(std::size_t H, std::size_t W, std::size_t block_h, std::size_t block_w,
                               int direction, ScanKind kind, std::size_t param) {
    ScanOrder o{H, W, kind, param, direction, {}, {}};
    o.perm.reserve(H * W);
    if (direction < 2) {
        blocked_traversal(o.perm, H, W, block_h, block_w,
                          [W](std::size_t y, std::size_t x) { return static_cast<std::uint32_t>(y * W + x); });
    } else {
        // Transposed scheme: traverse the W x H transpose with the same blocking.
        blocked_traversal(o.perm, W, H, block_h, block_w,
                          [W](std::size_t x, std::size_t y) { return static_cast<std::uint32_t>(y * W + x); });
    }
    return finish_order(std::move(o));
}

}  // namespace detail

/// Direction 0 row-major, 1 its reversal, 2 column-major, 3 its reversal.
inline ScanOrder raster_order(std::size_t H, std::size_t W, int direction) {
    detail::check_grid(H, W, direction);
    const std::size_t big = std::max(H, W);
    return detail::blocked_order(H, W, big, big, direction, ScanKind::raster, 0);
}

/// Direction 0: vertical stripes of width L visited left to right, each traversed
/// row-major over all rows. Direction 2 is the transposed scheme (horizontal stripes
/// of height L, column-major inside). Directions 1 and 3 reverse 0 and 2. A final
/// narrower stripe is kept as is.
inline ScanOrder stripe_order(std::size_t H, std::size_t W, std::size_t L, int direction) {
    detail::check_grid(H, W, direction);
    require(L >= 1, "stripe_order: stripe length must be >= 1");
    const std::size_t rows = direction < 2 ? H : W;
    return detail::blocked_order(H, W, rows, L, direction, ScanKind::stripe, L);
}

/// win x win tiles visited row-major with row-major cells (direction 0); direction 2
/// transposes both levels; 1 and 3 are reversals. Edge tiles may be ragged.
inline ScanOrder window_order(std::size_t H, std::size_t W, std::size_t win, int direction) {
    detail::check_grid(H, W, direction);
    require(win >= 1, "window_order: window must be >= 1");
    return detail::blocked_order(H, W, win, win, direction, ScanKind::window, win);
}

inline ScanOrder make_order(ScanKind kind, std::size_t H, std::size_t W, std::size_t param, int direction) {
    switch (kind) {
        case ScanKind::raster: return raster_order(H, W, direction);
        case ScanKind::window: return window_order(H, W, param, direction);
        case ScanKind::stripe: return stripe_order(H, W, param, direction);
    }
    throw ContractError("make_order: unknown kind");
}

/// Number of consecutive token pairs that are vertical grid neighbors.
inline std::size_t vertical_transitions(const ScanOrder& o) {
    std::size_t n = 0;
    for (std::size_t t = 1; t < o.perm.size(); ++t) {
        const std::size_t a = o.perm[t - 1], b = o.perm[t];
        const std::size_t lo = std::min(a, b), hi = std::max(a, b);
        if (hi - lo == o.width) ++n;
    }
    return n;
}

/// Flattens x[C x H x W] into the token sequence [C x H*W] given by `order`.
template <class T>
Var<T> gather_tokens(const Var<T>& x, const ScanOrder& order) {
    if (x.shape().size() != 3 || x.dim(1) != order.height || x.dim(2) != order.width)
        throw ContractError("gather_tokens: input " + to_string(x.shape()) + " does not match order grid " +
                            std::to_string(order.height) + "x" + std::to_string(order.width));
    const std::size_t C = x.dim(0), T_len = order.length();
    const auto& xv = x.value();
    Tensor<T> out({C, T_len});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T_len; ++t) out[c * T_len + t] = xv[c * T_len + order.perm[t]];
    return make_op<T>(std::move(out), {x},
        [perm = order.perm, C, T_len](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            auto& gx = *gin[0];
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t t = 0; t < T_len; ++t) gx[c * T_len + perm[t]] += g[c * T_len + t];
        },
        "gather_tokens");
}

/// Inverse of gather_tokens: writes token t back to grid cell perm[t].
template <class T>
Var<T> scatter_tokens(const Var<T>& seq, const ScanOrder& order) {
    if (seq.shape().size() != 2 || seq.dim(1) != order.length())
        throw ContractError("scatter_tokens: sequence " + to_string(seq.shape()) + " does not match order length " +
                            std::to_string(order.length()));
    const std::size_t C = seq.dim(0), T_len = order.length();
    const auto& sv = seq.value();
    Tensor<T> out({C, order.height, order.width});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T_len; ++t) out[c * T_len + order.perm[t]] = sv[c * T_len + t];
    return make_op<T>(std::move(out), {seq},
        [perm = order.perm, C, T_len](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            if (!gin[0]) return;
            auto& gs = *gin[0];
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t t = 0; t < T_len; ++t) gs[c * T_len + t] += g[c * T_len + perm[t]];
        },
        "scatter_tokens");
}

}  // namespace hsr
