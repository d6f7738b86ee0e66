#include <gtest/gtest.h>

#include <chrono>

#include "test_util.hpp"

using namespace hsr;
using hsr::testing::random_tensor;

namespace {
using Perm = std::vector<std::uint32_t>;

bool is_bijection(const ScanOrder& o) {
    const std::size_t n = o.height * o.width;
    if (o.perm.size() != n || o.inv.size() != n) return false;
    std::vector<bool> seen(n, false);
    for (auto p : o.perm) {
        if (p >= n || seen[p]) return false;
        seen[p] = true;
    }
    for (std::size_t t = 0; t < n; ++t)
        if (o.inv[o.perm[t]] != t) return false;
    return true;
}

Perm reversed(Perm p) {
    std::reverse(p.begin(), p.end());
    return p;
}
}  // namespace

TEST(StripeOrder, HandEnumeratedExample) {
    EXPECT_EQ(stripe_order(2, 4, 2, 0).perm, (Perm{0, 1, 4, 5, 2, 3, 6, 7}));
}

TEST(StripeOrder, FullWidthStripeIsRaster) {
    for (std::size_t H = 1; H <= 6; ++H)
        for (std::size_t W = 1; W <= 6; ++W) {
            EXPECT_EQ(stripe_order(H, W, W, 0).perm, raster_order(H, W, 0).perm);
            EXPECT_EQ(stripe_order(H, W, W, 1).perm, raster_order(H, W, 1).perm);
            // The transposed directions stripe along the other axis, so their degenerate length is H.
            EXPECT_EQ(stripe_order(H, W, H, 2).perm, raster_order(H, W, 2).perm);
            EXPECT_EQ(stripe_order(H, W, H, 3).perm, raster_order(H, W, 3).perm);
        }
    for (std::size_t n = 1; n <= 6; ++n)
        for (int d = 0; d < 4; ++d) EXPECT_EQ(stripe_order(n, n, n, d).perm, raster_order(n, n, d).perm);
}

TEST(StripeOrder, UnitStripesAreColumnMajor) {
    const auto o = stripe_order(3, 4, 1, 0);
    Perm expect;
    for (std::uint32_t x = 0; x < 4; ++x)
        for (std::uint32_t y = 0; y < 3; ++y) expect.push_back(y * 4 + x);
    EXPECT_EQ(o.perm, expect);
    EXPECT_EQ(o.perm, raster_order(3, 4, 2).perm);
}

TEST(StripeOrder, RaggedFinalStripeKept) {
    // W=5, L=2: stripes of width 2, 2, 1.
    EXPECT_EQ(stripe_order(2, 5, 2, 0).perm, (Perm{0, 1, 5, 6, 2, 3, 7, 8, 4, 9}));
}

TEST(StripeOrder, TransposedDirectionUsesHorizontalStripes) {
    // 4x2 grid, L=2: dir 2 walks rows {0,1} column-major, then rows {2,3}.
    EXPECT_EQ(stripe_order(4, 2, 2, 2).perm, (Perm{0, 2, 1, 3, 4, 6, 5, 7}));
}

TEST(RasterOrder, Examples) {
    EXPECT_EQ(raster_order(2, 2, 0).perm, (Perm{0, 1, 2, 3}));
    EXPECT_EQ(raster_order(2, 2, 2).perm, (Perm{0, 2, 1, 3}));
    for (std::size_t H = 1; H <= 5; ++H)
        for (std::size_t W = 1; W <= 5; ++W) EXPECT_EQ(raster_order(H, W, 1).perm, reversed(raster_order(H, W, 0).perm));
}

TEST(WindowOrder, Examples) {
    EXPECT_EQ(window_order(4, 4, 2, 0).perm, (Perm{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15}));
    for (std::size_t H = 1; H <= 5; ++H)
        for (std::size_t W = 1; W <= 5; ++W)
            for (int d = 0; d < 4; ++d) {
                EXPECT_EQ(window_order(H, W, std::max(H, W), d).perm, raster_order(H, W, d).perm);
                EXPECT_EQ(window_order(H, W, 1, d).perm, raster_order(H, W, d).perm);
            }
}

TEST(ScanOrders, ExhaustiveBijectionAndReversal) {
    for (auto kind : {ScanKind::raster, ScanKind::window, ScanKind::stripe})
        for (std::size_t H = 1; H <= 8; ++H)
            for (std::size_t W = 1; W <= 8; ++W)
                for (std::size_t p = 1; p <= 8; ++p) {
                    const auto o = directional_orders(kind, H, W, p);
                    for (int d = 0; d < 4; ++d) {
                        ASSERT_TRUE(is_bijection(o[d])) << to_string(kind) << " " << H << "x" << W << " p" << p << " d" << d;
                        ASSERT_EQ(o[d].direction, d);
                    }
                    ASSERT_EQ(o[1].perm, reversed(o[0].perm));
                    ASSERT_EQ(o[3].perm, reversed(o[2].perm));
                }
}

TEST(ScanOrders, StripeHasVerticalTransitionsRasterHasNone) {
    for (std::size_t H = 2; H <= 8; ++H)
        for (std::size_t W = 2; W <= 8; ++W) {
            EXPECT_EQ(vertical_transitions(raster_order(H, W, 0)), 0u);
            for (std::size_t L = 1; L < W; ++L) {
                std::size_t total = 0;
                for (int d = 0; d < 4; ++d) total += vertical_transitions(stripe_order(H, W, L, d));
                EXPECT_GE(total, 1u) << H << "x" << W << " L" << L;
            }
        }
}

TEST(ScanOrders, RejectsBadArguments) {
    EXPECT_THROW(stripe_order(0, 4, 2, 0), ContractError);
    EXPECT_THROW(stripe_order(4, 4, 0, 0), ContractError);
    EXPECT_THROW(window_order(4, 4, 2, 4), ContractError);
    EXPECT_THROW(parse_scan_kind("zigzag"), ContractError);
    EXPECT_EQ(parse_scan_kind("global"), ScanKind::raster);
}

TEST(ScanOrders, LargeGridIsFast) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto o = stripe_order(256, 256, 4, 0);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_TRUE(is_bijection(o));
    EXPECT_LT(ms, 10.0);
}

TEST(GatherScatter, RasterGatherIsReshape) {
    const auto x = random_tensor({3, 4, 5}, 1);
    EXPECT_EQ(gather_tokens(Var<double>(x), raster_order(4, 5, 0)).value().vec(), x.vec());
}

TEST(GatherScatter, RoundTripBitExact) {
    const auto x = random_tensor<float>({3, 5, 6}, 2);
    for (auto kind : {ScanKind::raster, ScanKind::window, ScanKind::stripe})
        for (int d = 0; d < 4; ++d) {
            const auto o = make_order(kind, 5, 6, 3, d);
            EXPECT_EQ(scatter_tokens(gather_tokens(Var<float>(x), o), o).value(), x);
        }
}

TEST(GatherScatter, GradientOfSumIsOnes) {
    const auto o = stripe_order(4, 6, 4, 1);
    const auto x = random_tensor({2, 4, 6}, 3);
    Tape<double> tape;
    const auto v = tape.leaf(x);
    EXPECT_EQ(tape.backward(sum(gather_tokens(v, o))).grad(v), Tensor<double>({2, 4, 6}, 1.0));
    const auto ws = random_tensor({2, 24}, 4);
    EXPECT_LE(grad_check([&](const Var<double>& t) { return sum(mul(gather_tokens(t, o), Var<double>(ws))); }, x), 1e-6);
    const auto ws2 = random_tensor({2, 4, 6}, 5);
    EXPECT_LE(grad_check([&](const Var<double>& t) { return sum(mul(scatter_tokens(t, o), Var<double>(ws2))); },
                         random_tensor({2, 24}, 6)), 1e-6);
}

TEST(GatherScatter, ShapeMismatchRejected) {
    EXPECT_THROW(gather_tokens(Var<double>(random_tensor({1, 3, 3}, 1)), raster_order(3, 4, 0)), ContractError);
    EXPECT_THROW(scatter_tokens(Var<double>(random_tensor({1, 5}, 1)), raster_order(2, 2, 0)), ContractError);
}
