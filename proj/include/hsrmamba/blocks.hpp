#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/nn.hpp"
#include "hsrmamba/ops.hpp"
#include "hsrmamba/params.hpp"
#include "hsrmamba/scan_order.hpp"
#include "hsrmamba/selective_scan.hpp"

namespace hsr {

/// Hyperparameters shared by every block instance.
struct BlockConfig {
    std::size_t state_dim = 16;       // N
    ScanKind scan = ScanKind::stripe;
    std::size_t scan_param = 4;       // stripe length L, or window side for window scans
    std::size_t channel_factor = 8;   // Head/Tail channel scaling
    std::size_t min_bottleneck = 8;   // Head output never narrower than this
    std::size_t ca_reduction = 4;
    std::size_t vssm_expand = 2;
    std::size_t hfse_dilation_a = 1;
    std::size_t hfse_dilation_b = 2;
};

/// Channels after a block Head: C / 8, clamped to at least 8.
inline std::size_t bottleneck_channels(std::size_t channels, const BlockConfig& cfg) {
    return std::max(channels / cfg.channel_factor, cfg.min_bottleneck);
}

// ---------------------------------------------------------------------------
// Parameter registration. Each init_* registers the tensors that the matching
// forward function reads under the same prefix.
// ---------------------------------------------------------------------------

template <class T>
void init_vssm(ParamSet<T>& ps, const std::string& p, std::size_t C, const BlockConfig& cfg, Rng& rng) {
    const std::size_t E = cfg.vssm_expand * C;
    init::layernorm(ps, p + ".ln_in", C);
    init::linear(ps, p + ".in_proj", 2 * E, C, rng);
    init::conv(ps, p + ".dwconv", E, 1, 3, rng);
    for (int k = 0; k < 4; ++k) init::s6(ps, p + ".ssm" + std::to_string(k), E, cfg.state_dim, rng);
    init::layernorm(ps, p + ".ln_out", E);
    init::linear(ps, p + ".out_proj", C, E, rng);
}

template <class T>
void init_lfse(ParamSet<T>& ps, const std::string& p, std::size_t C, const BlockConfig& cfg, Rng& rng) {
    const std::size_t c = bottleneck_channels(C, cfg);
    const std::size_t hidden = attention_hidden(c, cfg.ca_reduction);
    init::conv(ps, p + ".head", c, C, 3, rng);
    init::linear(ps, p + ".ca.fc1", hidden, c, rng);
    init::linear(ps, p + ".ca.fc2", c, hidden, rng);
    init_vssm(ps, p + ".vssm", c, cfg, rng);
    init::conv(ps, p + ".tail", C, c, 3, rng);
}

template <class T>
void init_hfse(ParamSet<T>& ps, const std::string& p, std::size_t C, const BlockConfig& cfg, Rng& rng) {
    const std::size_t c = bottleneck_channels(C, cfg);
    init::conv(ps, p + ".head", c, C, 3, rng);
    init::conv(ps, p + ".global.conv", c, c, 3, rng);
    init::layernorm(ps, p + ".global.ln", c);
    init_vssm(ps, p + ".global.vssm", c, cfg, rng);
    init::conv(ps, p + ".local.dw5", c, 1, 5, rng);
    init::conv(ps, p + ".local.dil_a", c, c, 3, rng);
    init::conv(ps, p + ".local.dil_b", c, c, 3, rng);
    ps.add(p + ".alpha", Tensor<T>({1}, T(0.5)));
    init::conv(ps, p + ".tail", C, c, 3, rng);
}

template <class T>
void init_hlfd(ParamSet<T>& ps, const std::string& p, std::size_t C, const BlockConfig& cfg, Rng& rng) {
    const std::size_t c = bottleneck_channels(C, cfg);
    if (c % 2 != 0)
        throw ContractError("hlfd: post-head channel count " + std::to_string(c) + " must be even to split");
    const std::size_t half = c / 2;
    init::conv(ps, p + ".head", c, C, 3, rng);
    init_vssm(ps, p + ".vssm", half, cfg, rng);
    init::conv(ps, p + ".ds.dw", half, 1, 3, rng);
    init::conv(ps, p + ".ds.pw", half, half, 1, rng);
    init::conv(ps, p + ".fuse", c, c, 3, rng);
    init::conv(ps, p + ".tail", C, c, 3, rng);
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// 3x3 reflect-padded conv with bias; `name` prefixes `.weight` and `.bias`.
template <class T>
Var<T> conv_layer(const Var<T>& x, const Bindings<T>& w, const std::string& name, std::size_t groups = 1,
                  std::size_t dilation = 1) {
    const auto& weight = w(name + ".weight");
    const ConvSpec spec = ConvSpec::square(weight.dim(2), groups, dilation);
    return conv2d(x, weight, w(name + ".bias"), spec);
}

/// Channel-mapping convolution into the block bottleneck.
template <class T>
Var<T> head(const Var<T>& x, const Bindings<T>& w, const std::string& p) {
    return conv_layer(x, w, p + ".head");
}

/// Channel-mapping convolution back out of the bottleneck.
template <class T>
Var<T> tail(const Var<T>& x, const Bindings<T>& w, const std::string& p) {
    return conv_layer(x, w, p + ".tail");
}

/// Visual state-space module with the configured scan:
/// LN -> linear (x2 expand, split x|z) -> depthwise 3x3 -> SiLU -> SS2D -> LN
/// -> * SiLU(z) -> linear -> + input.
template <class T>
Var<T> vssm_block(const Var<T>& x, const Bindings<T>& w, const std::string& p, const BlockConfig& cfg) {
    require(x.shape().size() == 3, "vssm_block: expected C x H x W");
    const std::size_t H = x.dim(1), W = x.dim(2);
    const std::size_t E = w(p + ".out_proj.weight").dim(1);
    auto h = layernorm(x, w(p + ".ln_in.gamma"), w(p + ".ln_in.beta"));
    auto xz = pointwise_linear(h, w(p + ".in_proj.weight"), w(p + ".in_proj.bias"));
    auto xs = slice_channels(xz, 0, E);
    auto z = slice_channels(xz, E, E);
    xs = silu(conv_layer(xs, w, p + ".dwconv", E));
    const auto orders = directional_orders(cfg.scan, H, W, cfg.scan_param);
    const std::array<S6Weights<T>, 4> ssm{w.s6(p + ".ssm0"), w.s6(p + ".ssm1"), w.s6(p + ".ssm2"),
                                          w.s6(p + ".ssm3")};
    auto y = ss2d(xs, ssm, orders);
    y = layernorm(y, w(p + ".ln_out.gamma"), w(p + ".ln_out.beta"));
    y = mul(y, silu(z));
    return add(pointwise_linear(y, w(p + ".out_proj.weight"), w(p + ".out_proj.bias")), x);
}

/// Weights of the soft gate for a given alpha, evaluated exactly as
/// e^a / (e^a + e^(1-a)) and e^(1-a) / (e^a + e^(1-a)).
inline std::pair<double, double> soft_gate_weights(double alpha) {
    const double ea = std::exp(alpha), eb = std::exp(1.0 - alpha);
    return {ea / (ea + eb), eb / (ea + eb)};
}

/// w1 (x21 * x1) + w2 (x22 * x1) with w1 = logistic(2 alpha - 1) and w2 = 1 - w1;
/// alpha is a single-element tensor.
template <class T>
Var<T> soft_gate(const Var<T>& x1, const Var<T>& x21, const Var<T>& x22, const Var<T>& alpha) {
    if (x1.shape() != x21.shape() || x1.shape() != x22.shape())
        throw ContractError("soft_gate: branch shapes differ");
    require(alpha.size() == 1, "soft_gate: alpha must be a scalar");
    auto w1 = sigmoid(affine(alpha, T{2}, T{-1}));
    auto w2 = affine(w1, T{-1}, T{1});
    return add(mul(w1, mul(x21, x1)), mul(w2, mul(x22, x1)));
}

/// Low-frequency spectral encoder: head, then CA and VSSM branches each through a
/// sigmoid, Hadamard product, residual with the head output, tail.
template <class T>
Var<T> lfse(const Var<T>& x, const Bindings<T>& w, const std::string& p, const BlockConfig& cfg) {
    auto xp = head(x, w, p);
    auto ca = channel_attention(xp, w(p + ".ca.fc1.weight"), w(p + ".ca.fc1.bias"), w(p + ".ca.fc2.weight"),
                                w(p + ".ca.fc2.bias"));
    auto v = vssm_block(xp, w, p + ".vssm", cfg);
    return tail(add(mul(sigmoid(ca), sigmoid(v)), xp), w, p);
}

/// High-frequency spatial encoder. Global branch: 3x3 conv -> LN -> VSSM. Local
/// branch: 5x5 depthwise, then two 3x3 convs with distinct dilations both reading
/// the depthwise output. Fused by the soft gate, residual, tail.
template <class T>
Var<T> hfse(const Var<T>& x, const Bindings<T>& w, const std::string& p, const BlockConfig& cfg) {
    auto xp = head(x, w, p);
    const std::size_t c = xp.dim(0);
    auto g = conv_layer(xp, w, p + ".global.conv");
    g = layernorm(g, w(p + ".global.ln.gamma"), w(p + ".global.ln.beta"));
    auto x1 = vssm_block(g, w, p + ".global.vssm", cfg);
    auto dw = conv_layer(xp, w, p + ".local.dw5", c);
    auto x21 = conv_layer(dw, w, p + ".local.dil_a", 1, cfg.hfse_dilation_a);
    auto x22 = conv_layer(dw, w, p + ".local.dil_b", 1, cfg.hfse_dilation_b);
    auto fused = soft_gate(x1, x21, x22, w(p + ".alpha"));
    return tail(add(fused, xp), w, p);
}

/// High/low-frequency fusion decoder: head, split channels in half, VSSM on the
/// first half and depthwise-separable 3x3 on the second, concat, 3x3 conv,
/// residual with the head output, tail.
template <class T>
Var<T> hlfd(const Var<T>& y, const Bindings<T>& w, const std::string& p, const BlockConfig& cfg) {
    auto yp = head(y, w, p);
    const std::size_t c = yp.dim(0);
    if (c % 2 != 0)
        throw ContractError("hlfd: post-head channel count " + std::to_string(c) + " must be even to split");
    const std::size_t half = c / 2;
    auto y1 = vssm_block(slice_channels(yp, 0, half), w, p + ".vssm", cfg);
    auto y2 = conv_layer(conv_layer(slice_channels(yp, half, half), w, p + ".ds.dw", half), w, p + ".ds.pw");
    auto fused = add(conv_layer(concat_channels<T>({y1, y2}), w, p + ".fuse"), yp);
    return tail(fused, w, p);
}

}  // namespace hsr
