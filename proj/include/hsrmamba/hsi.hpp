#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "hsrmamba/binary_io.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/ops.hpp"
#include "hsrmamba/rng.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

/// Hyperspectral cube, band-major then row-major, with the nominal value range
/// used for metric normalization.
struct HsiCube {
    std::size_t bands = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;
    float lo = 0.0f;
    float hi = 1.0f;

    HsiCube() = default;
    HsiCube(std::size_t c, std::size_t h, std::size_t w, float lo_ = 0.0f, float hi_ = 1.0f)
        : bands(c), height(h), width(w), values(c * h * w, 0.0f), lo(lo_), hi(hi_) {
        require(c >= 1 && h >= 1 && w >= 1, "HsiCube: dimensions must be >= 1");
    }

    float& at(std::size_t b, std::size_t y, std::size_t x) { return values[(b * height + y) * width + x]; }
    float at(std::size_t b, std::size_t y, std::size_t x) const { return values[(b * height + y) * width + x]; }

    Tensor<float> tensor() const { return Tensor<float>({bands, height, width}, values); }

    static HsiCube from_tensor(const Tensor<float>& t, float lo = 0.0f, float hi = 1.0f) {
        require(t.rank() == 3, "HsiCube::from_tensor: expected C x H x W");
        HsiCube c(t.dim(0), t.dim(1), t.dim(2), lo, hi);
        c.values.assign(t.data().begin(), t.data().end());
        return c;
    }

    friend bool operator==(const HsiCube&, const HsiCube&) = default;
};

// --- HSC container -------------------------------------------------------

inline constexpr std::size_t kHscHeaderBytes = 24;  // magic + 3 x u32 + 2 x f32

/// "HSC1", u32 C, H, W, f32 lo, hi, then C*H*W little-endian f32.
inline std::vector<std::uint8_t> encode_hsc(const HsiCube& cube) {
    require(cube.values.size() == cube.bands * cube.height * cube.width, "write_hsc: payload does not match dims");
    io::ByteWriter out;
    out.raw("HSC1", 4);
    out.u32(static_cast<std::uint32_t>(cube.bands));
    out.u32(static_cast<std::uint32_t>(cube.height));
    out.u32(static_cast<std::uint32_t>(cube.width));
    out.f32(cube.lo);
    out.f32(cube.hi);
    for (float v : cube.values) out.f32(v);
    return out.bytes();
}

/// Parses an HSC byte stream. Values outside [lo, hi] are clamped and the
/// count is reported through `clamped` (and logged when nonzero).
inline HsiCube decode_hsc(const std::vector<std::uint8_t>& bytes, std::size_t* clamped = nullptr) {
    io::ByteReader in(bytes);
    in.expect_magic("HSC1");
    const auto C = in.u32("header"), H = in.u32("header"), W = in.u32("header");
    const float lo = in.f32("header"), hi = in.f32("header");
    if (C == 0 || H == 0 || W == 0) throw FormatError("zero cube dimension in header", 4);
    if (!(lo <= hi)) throw FormatError("value range lo > hi in header", 16);
    const std::size_t n = static_cast<std::size_t>(C) * H * W;
    if (in.remaining() != 4 * n)
        throw FormatError("payload size mismatch: expected " + std::to_string(4 * n) + " bytes, found " +
                              std::to_string(in.remaining()),
                          in.offset());
    HsiCube cube(C, H, W, lo, hi);
    std::size_t n_clamped = 0;
    for (auto& v : cube.values) {
        const float raw = in.f32();
        v = std::clamp(raw, lo, hi);
        if (v != raw || std::isnan(raw)) ++n_clamped;
        if (std::isnan(raw)) v = lo;
    }
    if (n_clamped) std::clog << "hsc: clamped " << n_clamped << " values into [" << lo << ", " << hi << "]\n";
    if (clamped) *clamped = n_clamped;
    return cube;
}

inline void write_hsc(const HsiCube& cube, const std::string& path) { io::write_file(path, encode_hsc(cube)); }

inline HsiCube read_hsc(const std::string& path, std::size_t* clamped = nullptr) {
    return decode_hsc(io::read_file(path), clamped);
}

// --- degradation ---------------------------------------------------------

/// Normalized 3x3 Gaussian with standard deviation 0.5, row-major.
inline std::array<double, 9> gaussian_kernel_3x3(double sigma = 0.5) {
    std::array<double, 9> k{};
    double total = 0.0;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
            const double v = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
            k[static_cast<std::size_t>((i + 1) * 3 + (j + 1))] = v;
            total += v;
        }
    for (auto& v : k) v /= total;
    return k;
}

/// Per band: reflect-padded 3x3 Gaussian blur (sigma 0.5), then keep pixels at
/// offsets 0, s, 2s, ... in both axes.
inline HsiCube degrade(const HsiCube& cube, std::size_t s) {
    require(s == 2 || s == 4 || s == 8, "degrade: scale must be 2, 4 or 8");
    if (cube.height % s != 0 || cube.width % s != 0)
        throw ContractError("degrade: " + std::to_string(cube.height) + "x" + std::to_string(cube.width) +
                            " is not divisible by scale " + std::to_string(s));
    const auto k = gaussian_kernel_3x3();
    const std::size_t H = cube.height, W = cube.width, h = H / s, w = W / s;
    HsiCube out(cube.bands, h, w, cube.lo, cube.hi);
    for (std::size_t b = 0; b < cube.bands; ++b)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const auto cy = static_cast<std::ptrdiff_t>(y * s), cx = static_cast<std::ptrdiff_t>(x * s);
                double acc = 0.0;
                for (int i = -1; i <= 1; ++i)
                    for (int j = -1; j <= 1; ++j) {
                        const std::size_t yy = reflect_index(cy + i, H), xx = reflect_index(cx + j, W);
                        acc += k[static_cast<std::size_t>((i + 1) * 3 + (j + 1))] * cube.at(b, yy, xx);
                    }
                out.at(b, y, x) = static_cast<float>(acc);
            }
    return out;
}

// --- synthetic scenes ----------------------------------------------------

/// Sum of random smooth 2D Gaussian blobs whose spectra are low-order smooth
/// curves over the band axis, normalized to [0, 1]. `smoothness` in (0, 1]
/// scales blob widths relative to the image size.
inline HsiCube synth_cube(std::uint64_t seed, std::size_t C, std::size_t H, std::size_t W, double smoothness = 0.5) {
    require(C >= 4 && H >= 4 && W >= 4, "synth_cube: dimensions must be >= 4");
    require(smoothness > 0.0 && smoothness <= 1.0, "synth_cube: smoothness must be in (0, 1]");
    Rng rng(seed);
    constexpr std::size_t kBlobs = 12;
    constexpr std::size_t kHarmonics = 3;
    struct Blob {
        double cy, cx, sy, sx;
        std::array<double, kHarmonics + 1> spec;
    };
    std::vector<Blob> blobs(kBlobs);
    const double extent = static_cast<double>(std::min(H, W));
    for (auto& b : blobs) {
        b.cy = rng.uniform(0.0, static_cast<double>(H));
        b.cx = rng.uniform(0.0, static_cast<double>(W));
        b.sy = extent * smoothness * rng.uniform(0.08, 0.3);
        b.sx = extent * smoothness * rng.uniform(0.08, 0.3);
        b.spec[0] = rng.uniform(0.3, 1.0);
        for (std::size_t k = 1; k <= kHarmonics; ++k) b.spec[k] = rng.uniform(-0.3, 0.3) / static_cast<double>(k);
    }
    // Spectral profile of blob b at band c: smooth cosine series over c / C.
    std::vector<double> profile(kBlobs * C);
    for (std::size_t i = 0; i < kBlobs; ++i)
        for (std::size_t c = 0; c < C; ++c) {
            const double u = static_cast<double>(c) / static_cast<double>(C);
            double v = blobs[i].spec[0];
            for (std::size_t k = 1; k <= kHarmonics; ++k)
                v += blobs[i].spec[k] * std::cos(std::numbers::pi * static_cast<double>(k) * u);
            profile[i * C + c] = v;
        }
    std::vector<double> raw(C * H * W, 0.0);
    std::vector<double> spatial(kBlobs);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t i = 0; i < kBlobs; ++i) {
                const double dy = (static_cast<double>(y) - blobs[i].cy) / blobs[i].sy;
                const double dx = (static_cast<double>(x) - blobs[i].cx) / blobs[i].sx;
                spatial[i] = std::exp(-0.5 * (dy * dy + dx * dx));
            }
            for (std::size_t c = 0; c < C; ++c) {
                double v = 0.0;
                for (std::size_t i = 0; i < kBlobs; ++i) v += spatial[i] * profile[i * C + c];
                raw[(c * H + y) * W + x] = v;
            }
        }
    const auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *mn, span = *mx - *mn;
    HsiCube cube(C, H, W, 0.0f, 1.0f);
    for (std::size_t i = 0; i < raw.size(); ++i)
        cube.values[i] = span > 0.0 ? static_cast<float>(std::clamp((raw[i] - lo) / span, 0.0, 1.0)) : 0.0f;
    return cube;
}

// --- pseudo-colour -------------------------------------------------------

/// 8-bit interleaved RGB image.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3
};

inline std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline void write_ppm(const RgbImage& img, const std::string& path) { io::write_file(path, encode_ppm(img)); }

/// Min-max stretch of `values` to 0..255; a constant plane maps to 128.
inline std::vector<std::uint8_t> stretch_to_u8(const float* values, std::size_t n) {
    const auto [mn, mx] = std::minmax_element(values, values + n);
    std::vector<std::uint8_t> out(n, 128);
    if (*mx == *mn) return out;
    const double lo = *mn, range = static_cast<double>(*mx) - lo;
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (static_cast<double>(values[i]) - lo) / range));
    return out;
}

inline constexpr std::array<std::size_t, 3> kDefaultRgbBands{20, 30, 40};

/// Composes three bands into an RGB preview, each independently stretched.
inline RgbImage pseudo_color(const HsiCube& cube, std::size_t r = kDefaultRgbBands[0],
                             std::size_t g = kDefaultRgbBands[1], std::size_t b = kDefaultRgbBands[2]) {
    for (auto band : {r, g, b})
        if (band >= cube.bands)
            throw ContractError("pseudo_color: band " + std::to_string(band) + " out of range for " +
                                std::to_string(cube.bands) + "-band cube");
    const std::size_t n = cube.height * cube.width;
    RgbImage img{cube.width, cube.height, std::vector<std::uint8_t>(n * 3)};
    const std::array<std::size_t, 3> sel{r, g, b};
    for (std::size_t ch = 0; ch < 3; ++ch) {
        const auto plane = stretch_to_u8(&cube.values[sel[ch] * n], n);
        for (std::size_t i = 0; i < n; ++i) img.pixels[i * 3 + ch] = plane[i];
    }
    return img;
}

}  // namespace hsr
