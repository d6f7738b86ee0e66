#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/ops.hpp"
#include "hsrmamba/rng.hpp"
#include "hsrmamba/scan_order.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

/// Parameters of one selective-scan head over d channels with N states.
/// Projections are stored [out x in] so they apply as W * seq.
///   a_log     [d x N]  A = -exp(a_log), strictly negative
///   d_skip    [d]
///   w_b, w_c  [N x d]  input-dependent B_t = w_b x_t, C_t = w_c x_t
///   w_dt_down [r x d], w_dt_up [d x r], b_dt [d]
///                      delta_t = softplus(w_dt_up w_dt_down x_t + b_dt)
template <class Holder>
struct S6Set {
    Holder a_log, d_skip, w_b, w_c, w_dt_down, w_dt_up, b_dt;
};

template <class T>
using S6Params = S6Set<Tensor<T>>;
template <class T>
using S6Weights = S6Set<Var<T>>;

/// Low-rank width of the step-size projection: max(d / 16, 1).
inline std::size_t dt_rank(std::size_t channels) { return std::max<std::size_t>(channels / 16, 1); }

/// Wraps parameter tensors as constants, or as leaves of `tape` when given.
template <class T>
S6Weights<T> bind(const S6Params<T>& p, Tape<T>* tape = nullptr) {
    auto wrap = [tape](const Tensor<T>& t) { return tape ? tape->leaf(t) : Var<T>(t); };
    return {wrap(p.a_log), wrap(p.d_skip), wrap(p.w_b), wrap(p.w_c), wrap(p.w_dt_down), wrap(p.w_dt_up), wrap(p.b_dt)};
}

/// Standard initialization: A_log rows = log(1..N), D = 1, projections uniform in
/// +-1/sqrt(fan_in), dt bias = softplus^-1 of a log-uniform step in [1e-3, 1e-1].
template <class T>
S6Params<T> init_s6(std::size_t d, std::size_t N, Rng& rng) {
    const std::size_t r = dt_rank(d);
    S6Params<T> p{Tensor<T>({d, N}), Tensor<T>({d}, T{1}), Tensor<T>({N, d}), Tensor<T>({N, d}),
                  Tensor<T>({r, d}), Tensor<T>({d, r}), Tensor<T>({d})};
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t n = 0; n < N; ++n) p.a_log[i * N + n] = static_cast<T>(std::log(static_cast<double>(n + 1)));
    auto fill = [&rng](Tensor<T>& t, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    };
    fill(p.w_b, d);
    fill(p.w_c, d);
    fill(p.w_dt_down, d);
    fill(p.w_dt_up, r);
    for (std::size_t i = 0; i < d; ++i) {
        const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        p.b_dt[i] = static_cast<T>(dt + std::log(-std::expm1(-dt)));  // inverse softplus
    }
    return p;
}

template <class T>
void check_s6_shapes(const S6Weights<T>& w) {
    require(w.a_log.shape().size() == 2, "s6: a_log must be d x N");
    const std::size_t d = w.a_log.dim(0), N = w.a_log.dim(1);
    require(w.d_skip.shape() == Shape{d}, "s6: d_skip must have d entries");
    require(w.w_b.shape() == Shape({N, d}) && w.w_c.shape() == Shape({N, d}), "s6: w_b and w_c must be N x d");
    require(w.w_dt_down.shape().size() == 2 && w.w_dt_down.dim(1) == d, "s6: w_dt_down must be r x d");
    const std::size_t r = w.w_dt_down.dim(0);
    require(w.w_dt_up.shape() == Shape({d, r}), "s6: w_dt_up must be d x r");
    require(w.b_dt.shape() == Shape{d}, "s6: b_dt must have d entries");
}

/// Core recurrence over precomputed coefficients, recorded as one fused op:
///   h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t,  y_t = <C_t, h_t> + D u_t,  h_0 = 0.
/// u, delta [d x T]; A [d x N]; B, C [N x T]; D [d]. Strictly sequential in t.
template <class T>
Var<T> selective_scan(const Var<T>& u, const Var<T>& delta, const Var<T>& A, const Var<T>& B, const Var<T>& C,
                      const Var<T>& D) {
    const std::size_t d = u.dim(0), Tn = u.dim(1), N = A.dim(1);
    require(delta.shape() == u.shape() && A.dim(0) == d && B.shape() == Shape({N, Tn}) &&
                C.shape() == Shape({N, Tn}) && D.shape() == Shape{d},
            "selective_scan: inconsistent operand shapes");
    const auto& uv = u.value();
    const auto& dv = delta.value();
    const auto& Av = A.value();
    const auto& Bv = B.value();
    const auto& Cv = C.value();
    const auto& Dv = D.value();

    // states[t] holds h after step t; states[0] is the zero initial state.
    auto states = std::make_shared<std::vector<T>>((Tn + 1) * d * N, T{0});
    Tensor<T> y({d, Tn});
    for (std::size_t t = 0; t < Tn; ++t) {
        const T* hprev = &(*states)[t * d * N];
        T* h = &(*states)[(t + 1) * d * N];
        for (std::size_t i = 0; i < d; ++i) {
            const T dt = dv[i * Tn + t];
            const T ut = uv[i * Tn + t];
            T acc{0};
            for (std::size_t n = 0; n < N; ++n) {
                const T a = std::exp(dt * Av[i * N + n]);
                const T hn = a * hprev[i * N + n] + dt * Bv[n * Tn + t] * ut;
                h[i * N + n] = hn;
                acc += Cv[n * Tn + t] * hn;
            }
            y[i * Tn + t] = acc + Dv[i] * ut;
        }
    }
    if (!y.all_finite()) throw NumericError("selective_scan: non-finite state or output");

    return make_op<T>(std::move(y), {u, delta, A, B, C, D},
        [u, delta, A, B, C, D, states, d, Tn, N](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
            const auto& uv = u.value();
            const auto& dv = delta.value();
            const auto& Av = A.value();
            const auto& Bv = B.value();
            const auto& Cv = C.value();
            const auto& Dv = D.value();
            Tensor<T> gu({d, Tn}), gdelta({d, Tn}), gA({d, N}), gB({N, Tn}), gC({N, Tn}), gD({d});
            std::vector<T> dh(d * N, T{0});  // dL/dh_t carried backwards
            for (std::size_t t = Tn; t-- > 0;) {
                const T* hprev = &(*states)[t * d * N];
                const T* h = &(*states)[(t + 1) * d * N];
                for (std::size_t i = 0; i < d; ++i) {
                    const T gy = g[i * Tn + t];
                    const T dt = dv[i * Tn + t];
                    const T ut = uv[i * Tn + t];
                    gD[i] += gy * ut;
                    T gut = gy * Dv[i];
                    T gdt{0};
                    for (std::size_t n = 0; n < N; ++n) {
                        const std::size_t k = i * N + n;
                        gC[n * Tn + t] += gy * h[k];
                        const T dhk = dh[k] + gy * Cv[n * Tn + t];
                        const T a = std::exp(dt * Av[k]);
                        const T da = dhk * hprev[k];
                        gdt += da * a * Av[k] + dhk * Bv[n * Tn + t] * ut;
                        gA[k] += da * a * dt;
                        gB[n * Tn + t] += dhk * dt * ut;
                        gut += dhk * dt * Bv[n * Tn + t];
                        dh[k] = dhk * a;
                    }
                    gu[i * Tn + t] += gut;
                    gdelta[i * Tn + t] += gdt;
                }
            }
            const Tensor<T>* parts[] = {&gu, &gdelta, &gA, &gB, &gC, &gD};
            for (std::size_t k = 0; k < 6; ++k) {
                if (!gin[k]) continue;
                for (std::size_t i = 0; i < gin[k]->size(); ++i) (*gin[k])[i] += (*parts[k])[i];
            }
        },
        "selective_scan");
}

namespace detail {
template <class T>
struct S6Coefficients {
    Var<T> A, B, C, delta;
};

template <class T>
S6Coefficients<T> s6_coefficients(const Var<T>& seq, const S6Weights<T>& w) {
    check_s6_shapes(w);
    require(seq.shape().size() == 2 && seq.dim(0) == w.a_log.dim(0),
            "s6: sequence must be d x T with d = " + std::to_string(w.a_log.dim(0)));
    require(seq.dim(1) >= 1, "s6: sequence must have at least one token");
    const std::size_t d = seq.dim(0);
    auto A = neg(exp(w.a_log));
    auto B = matmul(w.w_b, seq);
    auto C = matmul(w.w_c, seq);
    auto delta = softplus(add(matmul(w.w_dt_up, matmul(w.w_dt_down, seq)), reshape(w.b_dt, {d, 1})));
    return {A, B, C, delta};
}
}  // namespace detail

/// Reference S6 forward over seq[d x T]: strictly sequential, differentiable.
template <class T>
Var<T> s6_forward_naive(const Var<T>& seq, const S6Weights<T>& w) {
    const auto co = detail::s6_coefficients(seq, w);
    return selective_scan(seq, co.delta, co.A, co.B, co.C, w.d_skip);
}

/// Forward-only S6 that discretizes a block of `chunk` tokens at a time into
/// contiguous token-major buffers, then runs the recurrence over the block,
/// carrying h across block boundaries. Same arithmetic as the naive path.
template <class T>
Tensor<T> s6_forward_chunked(const Tensor<T>& seq_t, const S6Weights<T>& w, std::size_t chunk) {
    require(chunk >= 1, "s6_forward_chunked: chunk must be >= 1");
    const Var<T> seq(seq_t);
    S6Weights<T> consts{Var<T>(w.a_log.value()), Var<T>(w.d_skip.value()), Var<T>(w.w_b.value()),
                        Var<T>(w.w_c.value()), Var<T>(w.w_dt_down.value()), Var<T>(w.w_dt_up.value()),
                        Var<T>(w.b_dt.value())};
    const auto co = detail::s6_coefficients(seq, consts);
    const std::size_t d = seq_t.dim(0), Tn = seq_t.dim(1), N = co.A.dim(1);
    const auto& uv = seq_t;
    const auto& dv = co.delta.value();
    const auto& Av = co.A.value();
    const auto& Bv = co.B.value();
    const auto& Cv = co.C.value();
    const auto& Dv = w.d_skip.value();

    Tensor<T> y({d, Tn});
    std::vector<T> h(d * N, T{0});
    std::vector<T> abar(chunk * d * N), bu(chunk * d * N), ct(chunk * N), ut(chunk * d);
    for (std::size_t t0 = 0; t0 < Tn; t0 += chunk) {
        const std::size_t len = std::min(chunk, Tn - t0);
        for (std::size_t s = 0; s < len; ++s) {
            const std::size_t t = t0 + s;
            for (std::size_t n = 0; n < N; ++n) ct[s * N + n] = Cv[n * Tn + t];
            for (std::size_t i = 0; i < d; ++i) {
                const T dt = dv[i * Tn + t];
                const T u = uv[i * Tn + t];
                ut[s * d + i] = u;
                for (std::size_t n = 0; n < N; ++n) {
                    abar[(s * d + i) * N + n] = std::exp(dt * Av[i * N + n]);
                    bu[(s * d + i) * N + n] = dt * Bv[n * Tn + t] * u;
                }
            }
        }
        for (std::size_t s = 0; s < len; ++s) {
            const T* a = &abar[s * d * N];
            const T* b = &bu[s * d * N];
            const T* c = &ct[s * N];
            for (std::size_t i = 0; i < d; ++i) {
                T acc{0};
                T* hi = &h[i * N];
                for (std::size_t n = 0; n < N; ++n) {
                    hi[n] = a[i * N + n] * hi[n] + b[i * N + n];
                    acc += c[n] * hi[n];
                }
                y[i * Tn + t0 + s] = acc + Dv[i] * ut[s * d + i];
            }
        }
    }
    if (!y.all_finite()) throw NumericError("s6_forward_chunked: non-finite state or output");
    return y;
}

/// Four-direction 2D selective scan: for each k, gather along orders[k], run S6
/// with params[k], scatter back; results are summed in fixed order k = 0..3.
template <class T>
Var<T> ss2d(const Var<T>& x, const std::array<S6Weights<T>, 4>& params, const std::array<ScanOrder, 4>& orders) {
    require(x.shape().size() == 3, "ss2d: expected C x H x W");
    for (const auto& o : orders)
        require(o.height == x.dim(1) && o.width == x.dim(2), "ss2d: scan order grid does not match input");
    for (const auto& p : params)
        require(p.a_log.dim(0) == x.dim(0), "ss2d: S6 channel count does not match input");
    Var<T> total;
    for (std::size_t k = 0; k < 4; ++k) {
        auto y = scatter_tokens(s6_forward_naive(gather_tokens(x, orders[k]), params[k]), orders[k]);
        total = k == 0 ? y : add(total, y);
    }
    return total;
}

/// The four directional orders of one scan kind on an H x W grid.
inline std::array<ScanOrder, 4> directional_orders(ScanKind kind, std::size_t H, std::size_t W, std::size_t param) {
    return {make_order(kind, H, W, param, 0), make_order(kind, H, W, param, 1), make_order(kind, H, W, param, 2),
            make_order(kind, H, W, param, 3)};
}

}  // namespace hsr
