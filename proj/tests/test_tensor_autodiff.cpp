#include <gtest/gtest.h>

#include <numbers>

#include "test_util.hpp"

using namespace hsr;
using hsr::testing::random_tensor;

namespace {
Var<double> C(Shape s, std::vector<double> v) { return Var<double>(Tensor<double>(std::move(s), std::move(v))); }
}  // namespace

TEST(Tensor, RejectsZeroExtentAndLengthMismatch) {
    EXPECT_THROW(Tensor<float>({2, 0}), ContractError);
    EXPECT_THROW(Tensor<float>(Shape{}), ContractError);
    EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ContractError);
    Tensor<float> t({2, 3}, 1.5f);
    EXPECT_EQ(shape_size(t.shape()), t.size());
}

TEST(Tensor, ItemRequiresSingleElement) {
    EXPECT_EQ(Tensor<double>::scalar(3.0).item(), 3.0);
    EXPECT_THROW(Tensor<double>({2}).item(), ContractError);
}

TEST(Broadcast, RightAlignedShapes) {
    EXPECT_EQ(broadcast_shape({3, 1, 5}, {4, 1}), (Shape{3, 4, 5}));
    EXPECT_EQ(broadcast_shape({1}, {2, 3}), (Shape{2, 3}));
    EXPECT_THROW(broadcast_shape({3, 2}, {3}), ContractError);
}

TEST(Broadcast, AssociativeOverShapeTriples) {
    const std::vector<Shape> pool{{1}, {3}, {1, 3}, {2, 1}, {2, 3}, {4, 1, 1}, {4, 2, 3}, {1, 2, 1}, {5}};
    for (const auto& a : pool)
        for (const auto& b : pool)
            for (const auto& c : pool) {
                Shape left, right;
                bool left_ok = true, right_ok = true;
                try { left = broadcast_shape(broadcast_shape(a, b), c); } catch (const ContractError&) { left_ok = false; }
                try { right = broadcast_shape(a, broadcast_shape(b, c)); } catch (const ContractError&) { right_ok = false; }
                ASSERT_EQ(left_ok, right_ok);
                if (left_ok) {
                    ASSERT_EQ(left, right);
                }
            }
}

TEST(Elementwise, Examples) {
    EXPECT_DOUBLE_EQ(sigmoid(C({1}, {0.0})).value().item(), 0.5);
    EXPECT_EQ(add(C({2}, {1, 2}), C({2}, {3, 4})).value().vec(), (std::vector<double>{4, 6}));
    EXPECT_NEAR(softplus(C({1}, {0.0})).value().item(), std::numbers::ln2, 1e-12);
}

TEST(Elementwise, AllKindsAgainstScalarFormulas) {
    const auto x = random_tensor({7}, 3, -3, 3);
    const Var<double> v(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = x[i];
        EXPECT_NEAR(exp(v).value()[i], std::exp(a), 1e-12);
        EXPECT_NEAR(sigmoid(v).value()[i], 1 / (1 + std::exp(-a)), 1e-12);
        EXPECT_NEAR(silu(v).value()[i], a / (1 + std::exp(-a)), 1e-12);
        EXPECT_NEAR(softplus(v).value()[i], std::log(1 + std::exp(a)), 1e-12);
        EXPECT_EQ(relu(v).value()[i], std::max(a, 0.0));
        EXPECT_EQ(neg(v).value()[i], -a);
        EXPECT_EQ(hsr::abs(v).value()[i], std::abs(a));
        EXPECT_EQ(scale(v, 2.5).value()[i], 2.5 * a);
    }
}

TEST(Elementwise, DivisionByZeroIsNumericError) {
    EXPECT_THROW(div(C({2}, {1, 2}), C({2}, {1, 0})), NumericError);
}

TEST(Elementwise, BroadcastChannelBias) {
    const auto x = random_tensor({2, 3, 4}, 5);
    const auto y = add(Var<double>(x), C({2, 1, 1}, {10, 20})).value();
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(y[c * 12 + i], x[c * 12 + i] + (c ? 20 : 10));
}

TEST(Matmul, Examples) {
    const auto a = random_tensor({2, 2}, 1);
    EXPECT_EQ(matmul(C({2, 2}, {1, 0, 0, 1}), Var<double>(a)).value(), a);
    EXPECT_EQ(matmul(C({1, 2}, {1, 2}), C({2, 1}, {3, 4})).value().item(), 11.0);
    EXPECT_THROW(matmul(C({1, 2}, {1, 2}), C({1, 2}, {3, 4})), ContractError);
}

TEST(Matmul, MatchesTripleLoopOracle) {
    const auto a = random_tensor({5, 7}, 11), b = random_tensor({7, 3}, 12);
    const auto c = matmul(Var<double>(a), Var<double>(b)).value();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 7; ++k) s += a[i * 7 + k] * b[k * 3 + j];
            EXPECT_LE(hsr::testing::rel_diff(c[i * 3 + j], s), 1e-6);
        }
}

TEST(Reduce, Examples) {
    EXPECT_EQ(sum(C({3}, {1, 2, 3})).value().item(), 6.0);
    EXPECT_DOUBLE_EQ(mean(Var<double>(Tensor<double>({3, 4}, 2.5))).value().item(), 2.5);
    EXPECT_EQ(reduce(ReduceKind::sum, C({2, 2}, {1, 2, 3, 4}), {0}).value().vec(), (std::vector<double>{4, 6}));
    EXPECT_EQ(reduce(ReduceKind::sum, C({2, 2}, {1, 2, 3, 4}), {1}).value().vec(), (std::vector<double>{3, 7}));
    EXPECT_THROW(reduce(ReduceKind::sum, C({2}, {1, 2}), {1}), ContractError);
}

TEST(Backward, SumGivesOnes) {
    Tape<double> tape;
    const auto x = tape.leaf(random_tensor({2, 3, 4}, 2));
    const auto g = tape.backward(sum(x)).grad(x);
    EXPECT_EQ(g, Tensor<double>({2, 3, 4}, 1.0));
}

TEST(Backward, SquareGivesTwoX) {
    Tape<double> tape;
    const auto x = tape.leaf(Tensor<double>({2}, {1, 2}));
    EXPECT_EQ(tape.backward(sum(mul(x, x))).grad(x).vec(), (std::vector<double>{2, 4}));
}

TEST(Backward, GradShapesMatchValuesForReachableNodes) {
    Tape<double> tape;
    const auto x = tape.leaf(random_tensor({3, 4}, 9));
    const auto b = tape.leaf(random_tensor({4}, 10));
    const auto y = sigmoid(add(x, b));
    const auto g = tape.backward(mean(y));
    EXPECT_EQ(g.grad(x).shape(), x.shape());
    EXPECT_EQ(g.grad(b).shape(), b.shape());
    EXPECT_EQ(g.grad(y).shape(), y.shape());
}

TEST(Backward, TopologicalInputsPrecede) {
    Tape<double> tape;
    const auto x = tape.leaf(random_tensor({3}, 1));
    auto y = exp(mul(x, x));
    y = add(y, x);
    for (std::size_t id = 0; id < tape.size(); ++id)
        for (auto in : tape.inputs_of(id)) EXPECT_LT(in, static_cast<std::ptrdiff_t>(id));
}

TEST(Backward, RejectsNonScalarLossAndForeignTape) {
    Tape<double> t1, t2;
    const auto x = t1.leaf(random_tensor({3}, 1));
    EXPECT_THROW(t1.backward(x), ContractError);
    EXPECT_THROW(t2.backward(sum(x)), ContractError);
}

TEST(Backward, ConstantsHaveNoGradient) {
    Tape<double> tape;
    const auto x = tape.leaf(random_tensor({3}, 1));
    const Var<double> k(random_tensor({3}, 2));
    const auto g = tape.backward(sum(mul(x, k)));
    EXPECT_FALSE(g.has(k));
    EXPECT_EQ(g.grad(x), k.value());
}

TEST(Backward, CompositeConvLayernormSigmoid) {
    const auto w = random_tensor({3, 2, 3, 3}, 21), bias = random_tensor({3}, 22);
    const auto gamma = random_tensor({3}, 23, 0.5, 1.5), beta = random_tensor({3}, 24);
    auto f = [&](const Var<double>& x) {
        auto y = conv2d(x, Var<double>(w), Var<double>(bias), ConvSpec::square(3));
        y = layernorm(y, Var<double>(gamma), Var<double>(beta));
        return sum(sigmoid(y));
    };
    EXPECT_LE(grad_check(f, random_tensor({2, 4, 5}, 25)), 1e-3);
}

TEST(GradCheck, LinearFunctionIsExact) {
    // No truncation error for a linear f, so a wide step only shrinks roundoff.
    EXPECT_LE(grad_check([](const Var<double>& x) { return sum(x); }, random_tensor({4, 3}, 4), 1e-3), 1e-10);
}

TEST(GradCheck, SigmoidWithCoarseStep) {
    EXPECT_LE(grad_check([](const Var<double>& x) { return sum(sigmoid(x)); }, random_tensor({10}, 5), 1e-5), 1e-6);
}

TEST(GradCheck, ReluAtKinkIsAnAllowedFailure) {
    // The subgradient chosen at 0 disagrees with the symmetric difference (0.5).
    const double err = grad_check([](const Var<double>& x) { return sum(relu(x)); }, Tensor<double>({1}, 0.0));
    EXPECT_GT(err, 0.1);
}

namespace {
using UnaryFn = Var<double> (*)(const Var<double>&);
using BinaryFn = Var<double> (*)(const Var<double>&, const Var<double>&);
}  // namespace

TEST(GradCheck, EveryUnaryOpOnTenRandomInputs) {
    const std::vector<std::pair<const char*, UnaryFn>> ops{
        {"exp", [](const Var<double>& x) { return exp(x); }},
        {"sigmoid", [](const Var<double>& x) { return sigmoid(x); }},
        {"silu", [](const Var<double>& x) { return silu(x); }},
        {"softplus", [](const Var<double>& x) { return softplus(x); }},
        {"relu", [](const Var<double>& x) { return relu(x); }},
        {"neg", [](const Var<double>& x) { return neg(x); }},
        {"abs", [](const Var<double>& x) { return hsr::abs(x); }},
        {"scale", [](const Var<double>& x) { return scale(x, -1.7); }},
        {"affine", [](const Var<double>& x) { return affine(x, 0.3, 2.0); }},
    };
    const auto wsum = random_tensor({2, 3}, 99);
    for (const auto& [name, op] : ops)
        for (std::uint64_t s = 0; s < 10; ++s) {
            auto f = [&, op = op](const Var<double>& x) { return sum(mul(op(x), Var<double>(wsum))); };
            EXPECT_LE(grad_check(f, random_tensor({2, 3}, 100 + s, -2, 2)), 1e-3) << name << " seed " << s;
        }
}

TEST(GradCheck, EveryBinaryOpBothOperandsWithBroadcast) {
    const std::vector<std::pair<const char*, BinaryFn>> ops{
        {"add", [](const Var<double>& a, const Var<double>& b) { return add(a, b); }},
        {"sub", [](const Var<double>& a, const Var<double>& b) { return sub(a, b); }},
        {"mul", [](const Var<double>& a, const Var<double>& b) { return mul(a, b); }},
        {"div", [](const Var<double>& a, const Var<double>& b) { return div(a, b); }},
    };
    for (const auto& [name, op] : ops)
        for (std::uint64_t s = 0; s < 10; ++s) {
            const auto a = random_tensor({2, 3, 4}, 200 + s);
            const auto b = random_tensor({3, 1}, 300 + s, 0.5, 2.0);
            const auto wsum = random_tensor({2, 3, 4}, 400 + s);
            auto fa = [&, op = op](const Var<double>& x) { return sum(mul(op(x, Var<double>(b)), Var<double>(wsum))); };
            auto fb = [&, op = op](const Var<double>& x) { return sum(mul(op(Var<double>(a), x), Var<double>(wsum))); };
            EXPECT_LE(grad_check(fa, a), 1e-3) << name;
            EXPECT_LE(grad_check(fb, b), 1e-3) << name;
        }
}

TEST(GradCheck, MatmulReduceReshapeSliceConcatPadCrop) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto b = random_tensor({4, 3}, 500 + s);
        const auto wsum = random_tensor({2, 3}, 600 + s);
        EXPECT_LE(grad_check([&](const Var<double>& x) { return sum(mul(matmul(x, Var<double>(b)), Var<double>(wsum))); },
                             random_tensor({2, 4}, 700 + s)), 1e-3);
        EXPECT_LE(grad_check([&](const Var<double>& x) { return sum(mul(matmul(Var<double>(wsum), x), Var<double>(random_tensor({2, 5}, 1)))); },
                             random_tensor({3, 5}, 800 + s)), 1e-3);
        const auto w3 = random_tensor({3}, 900 + s);
        EXPECT_LE(grad_check([&](const Var<double>& x) {
                      return sum(mul(reduce(ReduceKind::mean, x, {0, 2}), Var<double>(w3)));
                  }, random_tensor({2, 3, 4}, 1000 + s)), 1e-3);
        const auto w4 = random_tensor({6, 4}, 1100 + s);
        EXPECT_LE(grad_check([&](const Var<double>& x) { return sum(mul(reshape(x, {6, 4}), Var<double>(w4))); },
                             random_tensor({2, 3, 4}, 1200 + s)), 1e-3);
        const auto w5 = random_tensor({5, 3, 3}, 1300 + s);
        EXPECT_LE(grad_check([&](const Var<double>& x) {
                      auto parts = concat_channels<double>({slice_channels(x, 1, 2), x});
                      return sum(mul(parts, Var<double>(w5)));
                  }, random_tensor({3, 3, 3}, 1400 + s)), 1e-3);
        const auto w6 = random_tensor({2, 4, 6}, 1500 + s);
        EXPECT_LE(grad_check([&](const Var<double>& x) {
                      return sum(mul(pad_reflect_end(x, 1, 1), Var<double>(w6)));
                  }, random_tensor({2, 3, 5}, 1600 + s)), 1e-3);
        const auto w7 = random_tensor({2, 2, 3}, 1700 + s);
        EXPECT_LE(grad_check([&](const Var<double>& x) { return sum(mul(crop(x, 2, 3), Var<double>(w7))); },
                             random_tensor({2, 3, 4}, 1800 + s)), 1e-3);
    }
}

TEST(Tape, ReplayIsBitIdentical) {
    auto run = [] {
        Tape<double> tape;
        const auto x = tape.leaf(random_tensor({3, 4}, 77));
        const auto w = tape.leaf(random_tensor({4, 2}, 78));
        const auto g = tape.backward(sum(silu(matmul(x, w))));
        return std::make_pair(g.grad(x), g.grad(w));
    };
    EXPECT_EQ(run(), run());
}

TEST(Debug, OptInFiniteCheck) {
    const Var<double> x(Tensor<double>({1}, 1000.0));
    EXPECT_NO_THROW(exp(x));
    debug::set_check_finite(true);
    EXPECT_THROW(exp(x), NumericError);
    debug::set_check_finite(false);
}
