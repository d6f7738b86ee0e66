#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hsrmamba/hsi.hpp"

namespace hsr::testing {

// Straight-line references written against the index formula directly.
namespace oracle {

using hsr::HsiCube;

inline double v(const HsiCube& c, std::size_t b, std::size_t y, std::size_t x) { return c.at(b, y, x); }

inline double psnr(const HsiCube& a, const HsiCube& b) {
    double acc = 0;
    for (std::size_t k = 0; k < a.bands; ++k) {
        double se = 0;
        for (std::size_t y = 0; y < a.height; ++y)
            for (std::size_t x = 0; x < a.width; ++x) se += std::pow(v(a, k, y, x) - v(b, k, y, x), 2);
        acc += -10.0 * std::log10(se / static_cast<double>(a.height * a.width));
    }
    return acc / static_cast<double>(a.bands);
}

// Single-pass moments: var = E[x^2] - E[x]^2.
inline double ssim(const HsiCube& a, const HsiCube& b) {
    const double c1 = 1e-4, c2 = 9e-4;
    double acc = 0;
    for (std::size_t k = 0; k < a.bands; ++k) {
        double band = 0;
        std::size_t windows = 0;
        for (std::size_t y0 = 0; y0 + 8 <= a.height; ++y0)
            for (std::size_t x0 = 0; x0 + 8 <= a.width; ++x0, ++windows) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t y = y0; y < y0 + 8; ++y)
                    for (std::size_t x = x0; x < x0 + 8; ++x) {
                        const double p = v(a, k, y, x), q = v(b, k, y, x);
                        sa += p, sb += q, saa += p * p, sbb += q * q, sab += p * q;
                    }
                const double ma = sa / 64, mb = sb / 64;
                const double va = saa / 64 - ma * ma, vb = sbb / 64 - mb * mb, cov = sab / 64 - ma * mb;
                band += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        acc += band / static_cast<double>(windows);
    }
    return acc / static_cast<double>(a.bands);
}

inline double sam(const HsiCube& a, const HsiCube& b) {
    double acc = 0;
    for (std::size_t y = 0; y < a.height; ++y)
        for (std::size_t x = 0; x < a.width; ++x) {
            double d = 0, na = 0, nb = 0;
            for (std::size_t k = 0; k < a.bands; ++k) {
                d += v(a, k, y, x) * v(b, k, y, x);
                na += v(a, k, y, x) * v(a, k, y, x);
                nb += v(b, k, y, x) * v(b, k, y, x);
            }
            acc += std::acos(std::min(1.0, d / (std::sqrt(na) * std::sqrt(nb)))) * 180.0 / std::numbers::pi;
        }
    return acc / static_cast<double>(a.height * a.width);
}

inline double ergas(const HsiCube& r, const HsiCube& e, double s) {
    const double n = static_cast<double>(r.height * r.width);
    double acc = 0;
    for (std::size_t k = 0; k < r.bands; ++k) {
        double mu = 0, se = 0;
        for (std::size_t y = 0; y < r.height; ++y)
            for (std::size_t x = 0; x < r.width; ++x) {
                mu += v(r, k, y, x);
                se += std::pow(v(r, k, y, x) - v(e, k, y, x), 2);
            }
        mu /= n;
        acc += (se / n) / (mu * mu);
    }
    return 100.0 / s * std::sqrt(acc / static_cast<double>(r.bands));
}

}  // namespace oracle

}  // namespace hsr::testing
