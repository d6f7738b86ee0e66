#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/binary_io.hpp"
#include "hsrmamba/blocks.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/nn.hpp"
#include "hsrmamba/params.hpp"
#include "hsrmamba/rng.hpp"
#include "hsrmamba/scan_order.hpp"
#include "hsrmamba/wavelet.hpp"

namespace hsr {

struct ModelConfig {
    std::size_t hidden = 64;          // D
    std::size_t levels = 2;           // K wavelet levels
    std::size_t stripe = 4;           // L, also the window side for window scans
    std::size_t state_dim = 16;       // N
    std::size_t scale = 4;            // s
    std::size_t bands = 8;            // C
    std::size_t blocks_per_level = 1;
    ScanKind scan = ScanKind::stripe;
    std::uint64_t seed = 0;

    void validate() const {
        require(hidden >= 1 && bands >= 1, "model config: hidden dim and band count must be >= 1");
        require(levels >= 1, "model config: levels (K) must be >= 1");
        require(stripe >= 1, "model config: stripe length (L) must be >= 1");
        require(state_dim >= 1, "model config: state dim (N) must be >= 1");
        require(scale >= 1, "model config: scale must be >= 1");
        require(blocks_per_level >= 1, "model config: blocks per level must be >= 1");
    }

    BlockConfig block_config() const {
        BlockConfig b;
        b.state_dim = state_dim;
        b.scan = scan;
        b.scan_param = stripe;
        return b;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct ModelWeights {
    ModelConfig config;
    ParamSet<T> params;

    template <class U>
    ModelWeights<U> cast() const {
        return {config, params.template cast<U>()};
    }
};

namespace detail {
inline std::string block_name(const char* stage, std::size_t level, const char* block, std::size_t rep) {
    std::string name = std::string(stage) + "." + std::to_string(level) + "." + block;
    if (rep > 0) name += std::to_string(rep);
    return name;
}
}  // namespace detail

inline std::string lfse_name(std::size_t level, std::size_t rep = 0) { return detail::block_name("enc", level, "lfse", rep); }
inline std::string hfse_name(std::size_t level, std::size_t rep = 0) { return detail::block_name("enc", level, "hfse", rep); }
inline std::string hlfd_name(std::size_t level, std::size_t rep = 0) { return detail::block_name("dec", level, "hlfd", rep); }
inline const std::string kGlobalHead = "global.0.head";
inline const std::string kGlobalTail = "global.0.tail";

/// Deterministic initialization from cfg.seed. Levels 0..K each get an LFSE and
/// an HLFD; levels 1..K also get an HFSE for the high band split off above them.
template <class T>
ModelWeights<T> init_weights(const ModelConfig& cfg) {
    cfg.validate();
    const BlockConfig bc = cfg.block_config();
    Rng rng(cfg.seed);
    ModelWeights<T> w{cfg, {}};
    auto& ps = w.params;
    const std::size_t D = cfg.hidden;
    init::conv(ps, kGlobalHead, D, cfg.bands, 3, rng);
    for (std::size_t l = 0; l <= cfg.levels; ++l) {
        for (std::size_t r = 0; r < cfg.blocks_per_level; ++r) init_lfse(ps, lfse_name(l, r), D, bc, rng);
        if (l > 0)
            for (std::size_t r = 0; r < cfg.blocks_per_level; ++r) init_hfse(ps, hfse_name(l, r), 3 * D, bc, rng);
        for (std::size_t r = 0; r < cfg.blocks_per_level; ++r) init_hlfd(ps, hlfd_name(l, r), D, bc, rng);
    }
    init::conv(ps, kGlobalTail, cfg.bands, D, 3, rng);
    return w;
}

/// Full network on an already-upsampled input x_up[C x sH x sW]; returns
/// x_up + tail(features). Odd extents are reflect-padded before each DWT and
/// cropped after the matching IWT.
template <class T>
Var<T> forward_upsampled(const Var<T>& x_up, const Bindings<T>& w, const ModelConfig& cfg) {
    require(x_up.shape().size() == 3 && x_up.dim(0) == cfg.bands,
            "forward: input must have " + std::to_string(cfg.bands) + " bands, got " + to_string(x_up.shape()));
    const BlockConfig bc = cfg.block_config();
    const std::size_t K = cfg.levels;

    std::vector<Var<T>> high(K + 1);
    std::vector<std::pair<std::size_t, std::size_t>> dims(K + 1);
    auto feat = conv_layer(x_up, w, kGlobalHead);
    for (std::size_t l = 0; l <= K; ++l) {
        for (std::size_t r = 0; r < cfg.blocks_per_level; ++r) feat = lfse(feat, w, lfse_name(l, r), bc);
        if (l == K) break;
        dims[l] = {feat.dim(1), feat.dim(2)};
        const std::size_t ph = feat.dim(1) % 2, pw = feat.dim(2) % 2;
        if (ph || pw) feat = pad_reflect_end(feat, ph, pw);
        auto bands = dwt_haar(feat);
        if (bands.high.dim(0) != 3 * bands.low.dim(0))
            throw ContractError("forward: high band must carry 3x the low band channels");
        auto hi = bands.high;
        for (std::size_t r = 0; r < cfg.blocks_per_level; ++r) hi = hfse(hi, w, hfse_name(l + 1, r), bc);
        high[l + 1] = hi;
        feat = bands.low;
    }
    auto cur = feat;  // output of the deepest LFSE feeds the first decoder directly
    for (std::size_t l = K + 1; l-- > 0;) {
        for (std::size_t r = 0; r < cfg.blocks_per_level; ++r) cur = hlfd(cur, w, hlfd_name(l, r), bc);
        if (l == 0) break;
        if (high[l].dim(0) != 3 * cur.dim(0))
            throw ContractError("forward: decoder low path and stored high band disagree in channels");
        cur = iwt_haar(cur, high[l]);
        const auto [h, wd] = dims[l - 1];
        if (cur.dim(1) != h || cur.dim(2) != wd) cur = crop(cur, h, wd);
    }
    return add(x_up, conv_layer(cur, w, kGlobalTail));
}

/// Inference: bicubic upsample by cfg.scale, then the network.
template <class T>
Tensor<T> forward(const Tensor<T>& x_lr, const ModelWeights<T>& w) {
    const auto& cfg = w.config;
    require(x_lr.rank() == 3 && x_lr.dim(0) == cfg.bands,
            "forward: expected " + std::to_string(cfg.bands) + " bands, got " + to_string(x_lr.shape()));
    if (!x_lr.all_finite()) throw NumericError("forward: input contains non-finite values");
    const Bindings<T> b(w.params);
    auto y = forward_upsampled(Var<T>(bicubic_resize(x_lr, cfg.scale)), b, cfg).value();
    if (!y.all_finite()) throw NumericError("forward: output contains non-finite values");
    return y;
}

template <class T>
std::size_t count_params(const ModelWeights<T>& w) {
    return w.params.element_count();
}

// --- FLOP accounting: 2 flops per multiply-accumulate --------------------

inline std::uint64_t conv_flops(std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups, std::size_t H,
                                std::size_t W) {
    return 2ULL * cout * (cin / groups) * k * k * H * W;
}

inline std::uint64_t linear_flops(std::size_t in, std::size_t out, std::size_t positions) {
    return 2ULL * in * out * positions;
}

/// Projections for B, C and the low-rank step size, plus the scan: per (channel,
/// state, token) one MAC for the state update, one for delta*B*u, one for C.h.
inline std::uint64_t s6_flops(std::size_t d, std::size_t N, std::size_t T) {
    const std::size_t r = dt_rank(d);
    return 2 * linear_flops(d, N, T) + linear_flops(d, r, T) + linear_flops(r, d, T) + 2ULL * 3 * d * N * T;
}

inline std::uint64_t vssm_flops(std::size_t C, std::size_t H, std::size_t W, const BlockConfig& bc) {
    const std::size_t E = bc.vssm_expand * C, P = H * W;
    return linear_flops(C, 2 * E, P) + conv_flops(E, E, 3, E, H, W) + 4 * s6_flops(E, bc.state_dim, P) +
           linear_flops(E, C, P);
}

inline std::uint64_t lfse_flops(std::size_t C, std::size_t H, std::size_t W, const BlockConfig& bc) {
    const std::size_t c = bottleneck_channels(C, bc), hidden = attention_hidden(c, bc.ca_reduction);
    return conv_flops(C, c, 3, 1, H, W) + linear_flops(c, hidden, 1) + linear_flops(hidden, c, 1) +
           vssm_flops(c, H, W, bc) + conv_flops(c, C, 3, 1, H, W);
}

inline std::uint64_t hfse_flops(std::size_t C, std::size_t H, std::size_t W, const BlockConfig& bc) {
    const std::size_t c = bottleneck_channels(C, bc);
    return conv_flops(C, c, 3, 1, H, W) + conv_flops(c, c, 3, 1, H, W) + vssm_flops(c, H, W, bc) +
           conv_flops(c, c, 5, c, H, W) + 2 * conv_flops(c, c, 3, 1, H, W) + conv_flops(c, C, 3, 1, H, W);
}

inline std::uint64_t hlfd_flops(std::size_t C, std::size_t H, std::size_t W, const BlockConfig& bc) {
    const std::size_t c = bottleneck_channels(C, bc), half = c / 2;
    return conv_flops(C, c, 3, 1, H, W) + vssm_flops(half, H, W, bc) + conv_flops(half, half, 3, half, H, W) +
           conv_flops(half, half, 1, 1, H, W) + conv_flops(c, c, 3, 1, H, W) + conv_flops(c, C, 3, 1, H, W);
}

/// Approximate FLOPs of one forward pass on an h x w low-resolution input.
inline std::uint64_t estimate_flops(const ModelConfig& cfg, std::size_t h, std::size_t w) {
    cfg.validate();
    const BlockConfig bc = cfg.block_config();
    const std::size_t D = cfg.hidden, B = cfg.blocks_per_level;
    std::size_t H = h * cfg.scale, W = w * cfg.scale;
    std::uint64_t total = conv_flops(cfg.bands, D, 3, 1, H, W) + conv_flops(D, cfg.bands, 3, 1, H, W);
    for (std::size_t l = 0; l <= cfg.levels; ++l) {
        total += B * (lfse_flops(D, H, W, bc) + hlfd_flops(D, H, W, bc));
        if (l == cfg.levels) break;
        H = (H + 1) / 2;
        W = (W + 1) / 2;
        total += B * hfse_flops(3 * D, H, W, bc);
    }
    return total;
}

// --- HSRW checkpoints -----------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): "HSRW", u32 version, u32 D, K, L, N, scale, bands,
/// blocks_per_level, scan kind, u64 seed, u32 tensor count, then per tensor:
/// u32 name length, name bytes, u32 rank, u32 dims[rank], f32 values.
inline std::vector<std::uint8_t> encode_checkpoint(const ModelWeights<float>& w) {
    io::ByteWriter out;
    out.raw("HSRW", 4);
    out.u32(kCheckpointVersion);
    const auto& c = w.config;
    for (std::size_t v : {c.hidden, c.levels, c.stripe, c.state_dim, c.scale, c.bands, c.blocks_per_level})
        out.u32(static_cast<std::uint32_t>(v));
    out.u32(static_cast<std::uint32_t>(c.scan));
    out.u64(c.seed);
    out.u32(static_cast<std::uint32_t>(w.params.size()));
    for (std::size_t i = 0; i < w.params.size(); ++i) {
        const auto& t = w.params.values()[i];
        out.str(w.params.names()[i]);
        out.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) out.u32(static_cast<std::uint32_t>(d));
        for (float v : t.data()) out.f32(v);
    }
    return out.bytes();
}

inline ModelWeights<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    io::ByteReader in(bytes);
    in.expect_magic("HSRW");
    const std::size_t version_at = in.offset();
    const auto version = in.u32("version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    ModelConfig c;
    c.hidden = in.u32("config");
    c.levels = in.u32("config");
    c.stripe = in.u32("config");
    c.state_dim = in.u32("config");
    c.scale = in.u32("config");
    c.bands = in.u32("config");
    c.blocks_per_level = in.u32("config");
    const std::size_t kind_at = in.offset();
    const auto kind = in.u32("config");
    if (kind > 2) throw FormatError("unknown scan kind " + std::to_string(kind), kind_at);
    c.scan = static_cast<ScanKind>(kind);
    c.seed = in.u64("config");
    try {
        c.validate();
    } catch (const ContractError& e) {
        throw FormatError(std::string("invalid config record: ") + e.what(), in.offset());
    }
    ModelWeights<float> w{c, {}};
    const auto count = in.u32("tensor count");
    for (std::uint32_t k = 0; k < count; ++k) {
        auto name = in.str("tensor name");
        const std::size_t rank_at = in.offset();
        const auto rank = in.u32("tensor rank");
        if (rank == 0 || rank > 8) throw FormatError("bad tensor rank " + std::to_string(rank), rank_at);
        Shape shape(rank);
        for (auto& d : shape) {
            d = in.u32("tensor dims");
            if (d == 0) throw FormatError("zero tensor extent in '" + name + "'", in.offset() - 4);
        }
        const std::size_t n = shape_size(shape);
        in.need(4 * n, "tensor payload");
        std::vector<float> data(n);
        for (auto& v : data) v = in.f32();
        w.params.add(name, Tensor<float>(std::move(shape), std::move(data)));
    }
    if (in.remaining() != 0) throw FormatError("trailing bytes after checkpoint", in.offset());
    return w;
}

inline void save_checkpoint(const ModelWeights<float>& w, const std::string& path) {
    io::write_file(path, encode_checkpoint(w));
}

inline ModelWeights<float> load_checkpoint(const std::string& path) {
    return decode_checkpoint(io::read_file(path));
}

}  // namespace hsr
