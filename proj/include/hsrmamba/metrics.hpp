#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "hsrmamba/errors.hpp"
#include "hsrmamba/hsi.hpp"

namespace hsr {

/// Sentinel reported for a band whose squared error is exactly zero.
inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
    double psnr = 0.0;  // dB
    double ssim = 0.0;
    double sam = 0.0;   // degrees
    double ergas = 0.0;
};

namespace detail {
inline void check_same_dims(const HsiCube& x, const HsiCube& y, const char* who) {
    if (x.bands != y.bands || x.height != y.height || x.width != y.width)
        throw ContractError(std::string(who) + ": cube dimensions differ");
}

inline double band_mse(const HsiCube& x, const HsiCube& y, std::size_t b) {
    const std::size_t n = x.height * x.width;
    const float* px = &x.values[b * n];
    const float* py = &y.values[b * n];
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(px[i]) - static_cast<double>(py[i]);
        s += d * d;
    }
    return s / static_cast<double>(n);
}
}  // namespace detail

/// Mean over bands of 10 log10(peak^2 / MSE_b); zero-MSE bands count as the cap.
inline double psnr(const HsiCube& x, const HsiCube& y, double peak = 1.0) {
    detail::check_same_dims(x, y, "psnr");
    require(peak > 0.0, "psnr: peak must be positive");
    double total = 0.0;
    for (std::size_t b = 0; b < x.bands; ++b) {
        const double mse = detail::band_mse(x, y, b);
        total += mse == 0.0 ? kPsnrCap : 10.0 * std::log10(peak * peak / mse);
    }
    return total / static_cast<double>(x.bands);
}

inline constexpr std::size_t kSsimWindow = 8;

/// Per-band SSIM over every 8x8 window (stride 1, uniform weights, population
/// statistics), C1 = (0.01 peak)^2, C2 = (0.03 peak)^2; mean over windows, then bands.
inline double ssim(const HsiCube& x, const HsiCube& y, double peak = 1.0) {
    detail::check_same_dims(x, y, "ssim");
    if (x.height < kSsimWindow || x.width < kSsimWindow)
        throw ContractError("ssim: image must be at least 8x8, got " + std::to_string(x.height) + "x" +
                            std::to_string(x.width));
    const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
    const std::size_t H = x.height, W = x.width, n = H * W, k = kSsimWindow;
    const double inv = 1.0 / static_cast<double>(k * k);
    double total = 0.0;
    for (std::size_t b = 0; b < x.bands; ++b) {
        const float* px = &x.values[b * n];
        const float* py = &y.values[b * n];
        double band_sum = 0.0;
        for (std::size_t y0 = 0; y0 + k <= H; ++y0)
            for (std::size_t x0 = 0; x0 + k <= W; ++x0) {
                double mx = 0, my = 0;
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        mx += px[(y0 + i) * W + x0 + j];
                        my += py[(y0 + i) * W + x0 + j];
                    }
                mx *= inv;
                my *= inv;
                double vx = 0, vy = 0, cxy = 0;
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const double dx = px[(y0 + i) * W + x0 + j] - mx;
                        const double dy = py[(y0 + i) * W + x0 + j] - my;
                        vx += dx * dx;
                        vy += dy * dy;
                        cxy += dx * dy;
                    }
                vx *= inv;
                vy *= inv;
                cxy *= inv;
                band_sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        total += band_sum / static_cast<double>((H - k + 1) * (W - k + 1));
    }
    return total / static_cast<double>(x.bands);
}

/// Per-pixel spectral angle map in degrees. Pixels where either spectrum is all
/// zero are excluded: their map entry is NaN and they are counted in `excluded`.
struct SamMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> degrees;
    std::size_t excluded = 0;
};

inline SamMap sam_error_map(const HsiCube& x, const HsiCube& y) {
    detail::check_same_dims(x, y, "sam");
    const std::size_t n = x.height * x.width;
    SamMap m{x.height, x.width, std::vector<double>(n), 0};
    for (std::size_t p = 0; p < n; ++p) {
        double dot = 0, nx = 0, ny = 0;
        for (std::size_t b = 0; b < x.bands; ++b) {
            const double a = x.values[b * n + p], c = y.values[b * n + p];
            dot += a * c;
            nx += a * a;
            ny += c * c;
        }
        if (nx == 0.0 || ny == 0.0) {
            m.degrees[p] = std::numeric_limits<double>::quiet_NaN();
            ++m.excluded;
            continue;
        }
        const double cosang = std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
        m.degrees[p] = std::acos(cosang) * 180.0 / std::numbers::pi;
    }
    return m;
}

/// Mean spectral angle over valid pixels, in degrees.
inline double sam(const HsiCube& x, const HsiCube& y) {
    const auto m = sam_error_map(x, y);
    if (m.excluded == m.degrees.size()) throw NumericError("sam: every pixel has an all-zero spectrum");
    double s = 0.0;
    for (double v : m.degrees)
        if (!std::isnan(v)) s += v;
    return s / static_cast<double>(m.degrees.size() - m.excluded);
}

/// 100 / s * sqrt(mean_b MSE_b / mu_b^2), mu_b the mean of reference band b.
inline double ergas(const HsiCube& ref, const HsiCube& est, double s) {
    detail::check_same_dims(ref, est, "ergas");
    require(s > 0.0, "ergas: scale must be positive");
    const std::size_t n = ref.height * ref.width;
    double acc = 0.0;
    for (std::size_t b = 0; b < ref.bands; ++b) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += ref.values[b * n + i];
        mu /= static_cast<double>(n);
        if (mu == 0.0) throw NumericError("ergas: reference band " + std::to_string(b) + " has zero mean");
        acc += detail::band_mse(ref, est, b) / (mu * mu);
    }
    return 100.0 / s * std::sqrt(acc / static_cast<double>(ref.bands));
}

inline MetricReport evaluate(const HsiCube& pred, const HsiCube& gt, double scale, double peak = 1.0) {
    return {psnr(pred, gt, peak), ssim(pred, gt, peak), sam(gt, pred), ergas(gt, pred, scale)};
}

/// Shortest round-trip decimal, always with a fractional part ("99.0", "0.0").
inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

/// "psnr,ssim,sam,ergas" row (no trailing newline).
inline std::string to_csv_row(const MetricReport& r) {
    return format_number(r.psnr) + "," + format_number(r.ssim) + "," + format_number(r.sam) + "," +
           format_number(r.ergas);
}

inline constexpr const char* kMetricCsvHeader = "psnr,ssim,sam,ergas";

/// Grey-scale rendering of a SAM map, stretched like a pseudo-colour band;
/// excluded pixels render black.
inline RgbImage render_sam_map(const SamMap& m) {
    std::vector<float> v(m.degrees.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::isnan(m.degrees[i]) ? 0.0f : static_cast<float>(m.degrees[i]);
    const auto g = stretch_to_u8(v.data(), v.size());
    RgbImage img{m.width, m.height, std::vector<std::uint8_t>(v.size() * 3)};
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::uint8_t px = std::isnan(m.degrees[i]) ? 0 : g[i];
        img.pixels[i * 3] = img.pixels[i * 3 + 1] = img.pixels[i * 3 + 2] = px;
    }
    return img;
}

}  // namespace hsr
