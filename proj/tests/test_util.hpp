#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "hsrmamba/hsrmamba.hpp"

namespace hsr::testing {

template <class T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

inline HsiCube random_cube(std::size_t C, std::size_t H, std::size_t W, std::uint64_t seed, double lo = 0.05,
                           double hi = 1.0) {
    HsiCube c(C, H, W);
    Rng rng(seed);
    for (auto& v : c.values) v = static_cast<float>(rng.uniform(lo, hi));
    return c;
}

inline double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

/// Largest |a - b| / max(|b|, floor) over elements.
template <class T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-6) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
        m = std::max(m, d / std::max(std::abs(static_cast<double>(b[i])), floor));
    }
    return m;
}

}  // namespace hsr::testing

namespace hsr::testing {

/// Central-difference check of d f / d params for a sampled subset of entries of
/// every tensor in `ps` (all entries when a tensor has at most `per_tensor`).
/// Returns the worst relative error, floored like grad_check.
template <class F>
double param_grad_check(F&& f, ParamSet<double>& ps, std::size_t per_tensor, double eps = 1e-6,
                        std::string* worst_name = nullptr) {
    Tape<double> tape;
    const Bindings<double> bound(ps, &tape);
    const auto loss = f(bound);
    const auto g = tape.backward(loss);
    std::vector<Tensor<double>> analytic;
    for (const auto& v : bound.vars()) analytic.push_back(g.grad(v));

    double worst = 0.0;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        auto& t = ps.values()[k];
        const std::size_t n = t.size();
        const std::size_t stride = n <= per_tensor ? 1 : (n + per_tensor - 1) / per_tensor;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = t[i];
            t[i] = orig + eps;
            const double fp = f(Bindings<double>(ps)).value().item();
            t[i] = orig - eps;
            const double fm = f(Bindings<double>(ps)).value().item();
            t[i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
            if (err > worst) {
                worst = err;
                if (worst_name)
                    *worst_name = ps.names()[k] + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                                  " numeric " + std::to_string(numeric);
            }
        }
    }
    return worst;
}

}  // namespace hsr::testing
