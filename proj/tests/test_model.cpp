#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hsr;
using hsr::testing::param_grad_check;
using hsr::testing::random_tensor;

namespace {

ModelConfig micro(std::size_t scale = 2) {
    ModelConfig c;
    c.hidden = 8;
    c.levels = 1;
    c.bands = 4;
    c.scale = scale;
    c.state_dim = 4;
    c.seed = 5;
    return c;
}

void zero_global_tail(ModelWeights<float>& w) {
    for (auto& v : w.params.at(kGlobalTail + ".weight").data()) v = 0.0f;
    for (auto& v : w.params.at(kGlobalTail + ".bias").data()) v = 0.0f;
}

}  // namespace

TEST(ModelConfig, Validation) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    c.levels = 0;
    EXPECT_THROW(c.validate(), ContractError);
    c = {};
    c.stripe = 0;
    EXPECT_THROW(c.validate(), ContractError);
}

TEST(InitWeights, SameSeedBitIdenticalOtherSeedDiffers) {
    const auto c = micro();
    EXPECT_EQ(init_weights<float>(c).params, init_weights<float>(c).params);
    auto d = c;
    d.seed = 6;
    EXPECT_FALSE(init_weights<float>(c).params == init_weights<float>(d).params);
}

TEST(InitWeights, AlphaStartsAtSymmetryPoint) {
    ModelConfig c;
    c.levels = 2;
    c.blocks_per_level = 2;
    const auto w = init_weights<float>(c);
    std::size_t alphas = 0;
    for (std::size_t i = 0; i < w.params.size(); ++i)
        if (w.params.names()[i].ends_with(".alpha")) {
            ++alphas;
            EXPECT_EQ(w.params.values()[i].item(), 0.5f);
            const auto [w1, w2] = soft_gate_weights(0.5);
            EXPECT_EQ(w1, w2);
        }
    EXPECT_EQ(alphas, c.levels * c.blocks_per_level);
}

TEST(InitWeights, BlockLayout) {
    ModelConfig c;
    c.levels = 2;
    const auto w = init_weights<float>(c);
    for (std::size_t l = 0; l <= 2; ++l) {
        EXPECT_TRUE(w.params.contains(lfse_name(l) + ".head.weight"));
        EXPECT_TRUE(w.params.contains(hlfd_name(l) + ".tail.bias"));
        EXPECT_EQ(w.params.contains(hfse_name(l) + ".alpha"), l > 0);
    }
    EXPECT_EQ(w.params.at(kGlobalHead + ".weight").shape(), (Shape{64, 8, 3, 3}));
    EXPECT_EQ(w.params.at(hfse_name(1) + ".head.weight").shape(), (Shape{24, 192, 3, 3}));
}

TEST(CountParams, GoldenDefaultConfig) {
    ModelConfig c;  // D=64, K=2, C=8, N=16, L=4
    EXPECT_EQ(count_params(init_weights<float>(c)), 313424u);
}

TEST(CountParams, SingleConvHasTenParameters) {
    ParamSet<float> ps;
    Rng rng(1);
    init::conv(ps, "c", 1, 1, 3, rng);
    EXPECT_EQ(ps.element_count(), 10u);
}

TEST(CountParams, InvariantUnderScanKindAndDeterministic) {
    std::vector<std::size_t> counts;
    for (auto kind : {ScanKind::stripe, ScanKind::raster, ScanKind::window}) {
        ModelConfig c;
        c.scan = kind;
        counts.push_back(count_params(init_weights<float>(c)));
        EXPECT_EQ(init_weights<float>(c).params, init_weights<float>(ModelConfig{}).params);
    }
    EXPECT_EQ(counts[0], counts[1]);
    EXPECT_EQ(counts[0], counts[2]);
}

TEST(Flops, SingleConvOnFourByFour) {
    // Two flops per multiply-accumulate: 9 taps x 16 pixels x 2.
    EXPECT_EQ(conv_flops(1, 1, 3, 1, 4, 4), 288u);
}

TEST(Flops, GrowsWithInputAndIgnoresScanKind) {
    ModelConfig c;
    const auto a = estimate_flops(c, 8, 8), b = estimate_flops(c, 16, 16);
    EXPECT_GT(a, 0u);
    EXPECT_GT(b, 3 * a);
    c.scan = ScanKind::window;
    EXPECT_EQ(estimate_flops(c, 8, 8), a);
    EXPECT_EQ(estimate_flops(ModelConfig{}, 16, 16), 678463680u);
}

TEST(Forward, ShapeContract) {
    ModelConfig c;  // 8 bands, s = 4
    const auto y = forward(random_tensor<float>({8, 16, 16}, 1, 0, 1), init_weights<float>(c));
    EXPECT_EQ(y.shape(), (Shape{8, 64, 64}));
    EXPECT_THROW(forward(random_tensor<float>({7, 16, 16}, 1), init_weights<float>(c)), ContractError);
}

TEST(Forward, ZeroGlobalTailGivesBicubicBitExact) {
    for (std::size_t s : {2, 4, 8}) {
        auto c = micro(s);
        auto w = init_weights<float>(c);
        zero_global_tail(w);
        const auto x = random_tensor<float>({4, 6, 5}, s, 0, 1);
        EXPECT_EQ(forward(x, w), bicubic_resize(x, s)) << "s=" << s;
    }
}

TEST(Forward, OddExtentsArePaddedAndCropped) {
    ModelConfig c = micro(1);
    c.levels = 2;
    for (auto [h, w] : {std::pair{7, 5}, std::pair{5, 6}, std::pair{9, 9}}) {
        const auto x = random_tensor<float>({4, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, 3, 0, 1);
        EXPECT_EQ(forward(x, init_weights<float>(c)).shape(), x.shape());
    }
}

TEST(Forward, Deterministic) {
    const auto c = micro();
    const auto w = init_weights<float>(c);
    const auto x = random_tensor<float>({4, 8, 8}, 4, 0, 1);
    EXPECT_EQ(forward(x, w), forward(x, w));
}

TEST(Forward, RejectsNonFiniteInput) {
    auto x = random_tensor<float>({4, 4, 4}, 4);
    x[3] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(forward(x, init_weights<float>(micro())), NumericError);
}

TEST(Forward, GoldenChecksumWithDoubleCrossCheck) {
    ModelConfig c;
    c.hidden = 16;
    c.levels = 1;
    c.scale = 2;
    c.seed = 42;
    const auto w = init_weights<float>(c);
    const auto x = synth_cube(3, 8, 12, 12).tensor();
    const auto y = forward(x, w);
    const auto yd = forward(x.cast<double>(), w.cast<double>());
    double s = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += y[i];
        sq += static_cast<double>(y[i]) * y[i];
        EXPECT_NEAR(y[i], yd[i], 1e-5);
    }
    EXPECT_NEAR(s, 920.29318867030088, 1e-3);
    EXPECT_NEAR(sq, 469.22645704014764, 1e-3);
}

TEST(Forward, MicroModelGradientCheck) {
    const auto c = micro();
    auto ps = init_weights<float>(c).params.cast<double>();
    const auto x_up = Tensor<double>(bicubic_resize(random_tensor({4, 4, 4}, 7, 0, 1), 2));
    const auto ws = random_tensor({4, 8, 8}, 8);
    auto f = [&](const Var<double>& in, const Bindings<double>& b) {
        return sum(mul(forward_upsampled(in, b, c), Var<double>(ws)));
    };
    const Bindings<double> fixed(ps);
    EXPECT_LE(grad_check([&](const Var<double>& v) { return f(v, fixed); }, x_up, 1e-5), 2e-3);
    std::string worst;
    EXPECT_LE(param_grad_check([&](const Bindings<double>& b) { return f(Var<double>(x_up), b); }, ps, 2, 1e-5, &worst),
              2e-3)
        << worst;
}

TEST(Checkpoint, RoundTripIsByteExact) {
    ModelConfig c = micro();
    c.scan = ScanKind::window;
    c.blocks_per_level = 2;
    c.seed = 123456789012345ULL;
    const auto w = init_weights<float>(c);
    const auto bytes = encode_checkpoint(w);
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(back.config, c);
    EXPECT_EQ(back.params, w.params);
    EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, MalformedInputsReportOffsets) {
    const auto bytes = encode_checkpoint(init_weights<float>(micro()));
    auto bad = bytes;
    bad[0] = 'X';
    try {
        decode_checkpoint(bad);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    auto wrong_version = bytes;
    wrong_version[4] = 9;
    EXPECT_THROW(decode_checkpoint(wrong_version), FormatError);
    for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        std::vector<std::uint8_t> trunc(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_THROW(decode_checkpoint(trunc), FormatError) << cut;
    }
    auto trailing = bytes;
    trailing.push_back(0);
    try {
        decode_checkpoint(trailing);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), bytes.size());
    }
}
