#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/ops.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

enum class Padding { same_reflect, same_zero, valid };

struct ConvSpec {
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    Padding padding = Padding::same_reflect;

    static ConvSpec square(std::size_t k, std::size_t groups = 1, std::size_t dilation = 1) {
        return ConvSpec{k, k, 1, dilation, groups, Padding::same_reflect};
    }
};

namespace detail {

/// For each (output position, tap) the input coordinate, or -1 for a zero-padded tap.
inline std::vector<std::ptrdiff_t> conv_axis_map(std::size_t in, std::size_t out, std::size_t k,
                                                 std::size_t stride, std::size_t dilation, Padding pad) {
    const std::size_t extent = dilation * (k - 1);
    std::ptrdiff_t before = 0;
    if (pad != Padding::valid) {
        const std::size_t needed = (out - 1) * stride + extent + 1;
        const std::size_t total = needed > in ? needed - in : 0;
        before = static_cast<std::ptrdiff_t>(total / 2);
    }
    std::vector<std::ptrdiff_t> map(out * k);
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t t = 0; t < k; ++t) {
            std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o * stride + t * dilation) - before;
            if (i < 0 || i >= static_cast<std::ptrdiff_t>(in)) {
                if (pad == Padding::same_reflect) i = static_cast<std::ptrdiff_t>(reflect_index(i, in));
                else i = -1;
            }
            map[o * k + t] = i;
        }
    return map;
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t dilation,
                                   Padding pad) {
    if (pad != Padding::valid) return (in + stride - 1) / stride;
    const std::size_t extent = dilation * (k - 1) + 1;
    if (in < extent)
        throw ContractError("conv2d: input extent " + std::to_string(in) + " smaller than kernel extent " +
                            std::to_string(extent) + " under valid padding");
    return (in - extent) / stride + 1;
}

}  // namespace detail

/// Cross-correlation of x[C_in x H x W] with w[C_out x C_in/groups x kh x kw], plus optional bias[C_out].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b, const ConvSpec& spec) {
    if (x.shape().size() != 3) throw ContractError("conv2d: input must be C x H x W, got " + to_string(x.shape()));
    if (w.shape().size() != 4) throw ContractError("conv2d: weight must be rank 4, got " + to_string(w.shape()));
    const std::size_t cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t cout = w.dim(0), cpg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t G = spec.groups;
    if (G == 0 || spec.stride == 0 || spec.dilation == 0) throw ContractError("conv2d: zero stride/dilation/groups");
    if (cin % G != 0 || cout % G != 0)
        throw ContractError("conv2d: channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                            " not divisible by groups " + std::to_string(G));
    if (cpg != cin / G)
        throw ContractError("conv2d: weight expects " + std::to_string(cpg) + " channels per group, input gives " +
                            std::to_string(cin / G));
    if (kh != spec.kernel_h || kw != spec.kernel_w) throw ContractError("conv2d: weight kernel differs from spec");
    if (b && (b->shape().size() != 1 || b->dim(0) != cout)) throw ContractError("conv2d: bias must have C_out entries");

    const std::size_t Ho = detail::conv_out_extent(H, kh, spec.stride, spec.dilation, spec.padding);
    const std::size_t Wo = detail::conv_out_extent(W, kw, spec.stride, spec.dilation, spec.padding);
    auto my = detail::conv_axis_map(H, Ho, kh, spec.stride, spec.dilation, spec.padding);
    auto mx = detail::conv_axis_map(W, Wo, kw, spec.stride, spec.dilation, spec.padding);
    const std::size_t opg = cout / G;

    const auto& xv = x.value();
    const auto& wv = w.value();
    Tensor<T> out({cout, Ho, Wo});
    std::vector<T> row(Wo);
    for (std::size_t co = 0; co < cout; ++co) {
        const std::size_t g = co / opg;
        T* oplane = &out[co * Ho * Wo];
        if (b) std::fill(oplane, oplane + Ho * Wo, b->value()[co]);
        for (std::size_t cl = 0; cl < cpg; ++cl) {
            const T* iplane = &xv[(g * cpg + cl) * H * W];
            for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const T wk = wv[((co * cpg + cl) * kh + ky) * kw + kx];
                    for (std::size_t oy = 0; oy < Ho; ++oy) {
                        const auto iy = my[oy * kh + ky];
                        if (iy < 0) continue;
                        const T* irow = iplane + static_cast<std::size_t>(iy) * W;
                        T* orow = oplane + oy * Wo;
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            const auto ix = mx[ox * kw + kx];
                            if (ix >= 0) orow[ox] += wk * irow[ix];
                        }
                    }
                }
        }
    }

    std::vector<Var<T>> inputs{x, w};
    if (b) inputs.push_back(*b);
    return make_op<T>(std::move(out), inputs,
        [x, w, my = std::move(my), mx = std::move(mx), cin, H, W, cout, cpg, kh, kw, Ho, Wo, opg](
            const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const auto& xv = x.value();
            const auto& wv = w.value();
            Tensor<T>* gx = gin[0];
            Tensor<T>* gw = gin[1];
            Tensor<T>* gb = gin.size() > 2 ? gin[2] : nullptr;
            for (std::size_t co = 0; co < cout; ++co) {
                const std::size_t grp = co / opg;
                const T* gplane = &g[co * Ho * Wo];
                if (gb) {
                    T s{0};
                    for (std::size_t i = 0; i < Ho * Wo; ++i) s += gplane[i];
                    (*gb)[co] += s;
                }
                for (std::size_t cl = 0; cl < cpg; ++cl) {
                    const std::size_t ci = grp * cpg + cl;
                    const T* iplane = &xv[ci * H * W];
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::size_t widx = ((co * cpg + cl) * kh + ky) * kw + kx;
                            const T wk = wv[widx];
                            T acc{0};
                            for (std::size_t oy = 0; oy < Ho; ++oy) {
                                const auto iy = my[oy * kh + ky];
                                if (iy < 0) continue;
                                const std::size_t ioff = ci * H * W + static_cast<std::size_t>(iy) * W;
                                const T* grow = gplane + oy * Wo;
                                for (std::size_t ox = 0; ox < Wo; ++ox) {
                                    const auto ix = mx[ox * kw + kx];
                                    if (ix < 0) continue;
                                    if (gw) acc += grow[ox] * iplane[static_cast<std::size_t>(iy) * W + ix];
                                    if (gx) (*gx)[ioff + ix] += wk * grow[ox];
                                }
                            }
                            if (gw) (*gw)[widx] += acc;
                        }
                }
            }
            (void)cin;
        },
        "conv2d");
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const ConvSpec& spec) {
    return conv2d(x, w, std::optional<Var<T>>(b), spec);
}

/// Bias-free convolution.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const ConvSpec& spec) {
    return conv2d(x, w, std::optional<Var<T>>(), spec);
}

/// Per-pixel linear map on C x H x W: y[:, p] = W x[:, p] + b, with W[out x in], b[out].
template <class T>
Var<T> pointwise_linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    require(x.shape().size() == 3, "pointwise_linear: expected C x H x W");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    require(w.shape().size() == 2 && w.dim(1) == C, "pointwise_linear: weight must be out x " + std::to_string(C));
    const std::size_t out = w.dim(0);
    auto flat = reshape(x, {C, H * W});
    auto y = add(matmul(w, flat), reshape(b, {out, 1}));
    return reshape(y, {out, H, W});
}

/// Normalizes over the channel axis at each spatial position, then applies
/// per-channel gamma and beta.
template <class T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    require(eps > T{0}, "layernorm: eps must be positive");
    require(x.shape().size() == 3, "layernorm: expected C x H x W");
    const std::size_t C = x.dim(0), P = x.dim(1) * x.dim(2);
    require(gamma.size() == C && beta.size() == C, "layernorm: affine params must have C entries");
    const auto& xv = x.value();
    std::vector<T> mu(P, T{0}), var(P, T{0});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) mu[p] += xv[c * P + p];
    for (auto& m : mu) m /= static_cast<T>(C);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) {
            const T d = xv[c * P + p] - mu[p];
            var[p] += d * d;
        }
    std::vector<T> inv_std(P);
    for (std::size_t p = 0; p < P; ++p) inv_std[p] = T{1} / std::sqrt(var[p] / static_cast<T>(C) + eps);

    Tensor<T> xhat(x.shape());
    Tensor<T> out(x.shape());
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) {
            const T h = (xv[c * P + p] - mu[p]) * inv_std[p];
            xhat[c * P + p] = h;
            out[c * P + p] = h * gv[c] + bv[c];
        }

    return make_op<T>(std::move(out), {x, gamma, beta},
        [xhat = std::move(xhat), inv_std = std::move(inv_std), gamma, C, P](
            const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const auto& gv = gamma.value();
            if (gin[1] || gin[2]) {
                for (std::size_t c = 0; c < C; ++c) {
                    T sg{0}, sb{0};
                    for (std::size_t p = 0; p < P; ++p) {
                        sg += g[c * P + p] * xhat[c * P + p];
                        sb += g[c * P + p];
                    }
                    if (gin[1]) (*gin[1])[c] += sg;
                    if (gin[2]) (*gin[2])[c] += sb;
                }
            }
            if (!gin[0]) return;
            std::vector<T> s1(P, T{0}), s2(P, T{0});
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t p = 0; p < P; ++p) {
                    const T gh = g[c * P + p] * gv[c];
                    s1[p] += gh;
                    s2[p] += gh * xhat[c * P + p];
                }
            const T invC = T{1} / static_cast<T>(C);
            auto& gx = *gin[0];
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t p = 0; p < P; ++p) {
                    const T gh = g[c * P + p] * gv[c];
                    gx[c * P + p] += inv_std[p] * (gh - invC * s1[p] - xhat[c * P + p] * invC * s2[p]);
                }
        },
        "layernorm");
}

/// Squeeze-and-excitation gate: mean-pool each channel, C -> C/r (ReLU) -> C (sigmoid),
/// then rescale x per channel. w1[r_c x C], b1[r_c], w2[C x r_c], b2[C].
template <class T>
Var<T> channel_attention(const Var<T>& x, const Var<T>& w1, const Var<T>& b1, const Var<T>& w2,
                         const Var<T>& b2) {
    require(x.shape().size() == 3, "channel_attention: expected C x H x W");
    const std::size_t C = x.dim(0);
    require(w1.shape().size() == 2 && w1.dim(1) == C, "channel_attention: w1 must be hidden x C");
    const std::size_t hidden = w1.dim(0);
    auto pooled = reshape(reduce(ReduceKind::mean, x, {1, 2}), {C, 1});
    auto z = relu(add(matmul(w1, pooled), reshape(b1, {hidden, 1})));
    auto gate = sigmoid(add(matmul(w2, z), reshape(b2, {C, 1})));
    return mul(x, reshape(gate, {C, 1, 1}));
}

/// Bottleneck width of the channel-attention MLP: C / r clamped to at least 1.
inline std::size_t attention_hidden(std::size_t channels, std::size_t reduction) {
    return std::max<std::size_t>(channels / reduction, 1);
}

/// Mean absolute error.
template <class T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target) {
    if (pred.shape() != target.shape())
        throw ContractError("l1_loss: shape mismatch " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
    return mean(abs(sub(pred, target)));
}

// --- bicubic resampling (fixed preprocessing, not recorded) ---

/// Keys cubic convolution kernel with a = -0.5.
inline double keys_cubic(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

namespace detail {
struct ResampleTaps {
    std::vector<std::size_t> index;  // 4 per output sample
    std::vector<double> weight;
};

inline ResampleTaps bicubic_taps(std::size_t in, std::size_t out) {
    ResampleTaps taps;
    taps.index.resize(out * 4);
    taps.weight.resize(out * 4);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        const double base = std::floor(src);
        const double t = src - base;
        for (int k = 0; k < 4; ++k) {
            const auto i = static_cast<std::ptrdiff_t>(base) + k - 1;
            taps.index[o * 4 + k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(in) - 1));
            taps.weight[o * 4 + k] = keys_cubic(t - static_cast<double>(k - 1));
        }
    }
    return taps;
}
}  // namespace detail

/// Separable bicubic resize of every band of a C x H x W tensor to C x out_h x out_w,
/// half-pixel aligned, with clamped edge sampling.
template <class T>
Tensor<T> bicubic_resize_to(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    require(x.rank() == 3, "bicubic_resize: expected C x H x W");
    require(out_h > 0 && out_w > 0, "bicubic_resize: empty target");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const auto ty = detail::bicubic_taps(H, out_h);
    const auto tx = detail::bicubic_taps(W, out_w);
    Tensor<T> out({C, out_h, out_w});
    std::vector<double> tmp(H * out_w);
    for (std::size_t c = 0; c < C; ++c) {
        const T* plane = &x[c * H * W];
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k)
                    s += tx.weight[ox * 4 + k] * static_cast<double>(plane[y * W + tx.index[ox * 4 + k]]);
                tmp[y * out_w + ox] = s;
            }
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += ty.weight[oy * 4 + k] * tmp[ty.index[oy * 4 + k] * out_w + ox];
                out.at(c, oy, ox) = static_cast<T>(s);
            }
    }
    return out;
}

/// Resize by the rational factor num/den; target extents must come out integral.
template <class T>
Tensor<T> bicubic_resize(const Tensor<T>& x, std::size_t num, std::size_t den = 1) {
    require(x.rank() == 3, "bicubic_resize: expected C x H x W");
    require(num > 0 && den > 0, "bicubic_resize: scale must be positive");
    const std::size_t H = x.dim(1), W = x.dim(2);
    if ((H * num) % den != 0 || (W * num) % den != 0)
        throw ContractError("bicubic_resize: target extents of " + to_string(x.shape()) + " at scale " +
                            std::to_string(num) + "/" + std::to_string(den) + " are not integral");
    return bicubic_resize_to(x, H * num / den, W * num / den);
}

// --- AdamW ---

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

template <class T>
struct OptState {
    AdamWConfig hyper;
    std::size_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
};

/// One AdamW update with decoupled weight decay and bias correction:
/// p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
template <class T>
void adamw_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, OptState<T>& state) {
    require(params.size() == grads.size(), "adamw_step: params and grads differ in count");
    require(state.hyper.lr > 0.0, "adamw_step: lr must be positive");
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    require(state.m.size() == params.size(), "adamw_step: optimizer state does not match parameter list");
    ++state.step;
    const auto& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - h.lr * h.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        const auto& g = grads[k];
        require(p.shape() == g.shape() && p.shape() == state.m[k].shape(),
                "adamw_step: shape mismatch for parameter " + std::to_string(k));
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double pi = static_cast<double>(p[i]) * decay - h.lr * mhat / (std::sqrt(vhat) + h.eps);
            p[i] = static_cast<T>(pi);
        }
    }
}

}  // namespace hsr
