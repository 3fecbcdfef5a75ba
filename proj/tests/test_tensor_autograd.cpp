#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "deskml/autograd.hpp"
#include "deskml/gradcheck.hpp"
#include "support.hpp"

namespace deskml {
namespace {

using testing::expect_gradients;
using testing::expect_tensor_near;

TEST(Tensor, ShapeAndNumel) {
    Tensor t(Shape{2, 3}, 1.5);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(shape_numel(Shape{4, 5, 2}), 40u);
    EXPECT_EQ(Tensor().numel(), 1u);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, MatmulIdentity) {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    EXPECT_EQ(kernels::matmul(Tensor::identity(2), a), a);
}

TEST(Tensor, MatmulHand) {
    const Tensor r = kernels::matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
    EXPECT_EQ(r, Tensor::matrix({{11}}));
}

TEST(Tensor, MatmulZero) {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    EXPECT_EQ(kernels::matmul(Tensor::zeros({2, 2}), a), Tensor::zeros({2, 2}));
}

TEST(Tensor, MatmulInnerMismatchThrows) {
    EXPECT_THROW(kernels::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Tensor, MatmulTransposeVariantsAgree) {
    Rng rng(3);
    const Tensor a = rng.normal_tensor({3, 4});
    const Tensor b = rng.normal_tensor({5, 4});
    const Tensor c = rng.normal_tensor({3, 5});
    expect_tensor_near(kernels::matmul_bt(a, b), kernels::matmul(a, b.transposed()), 1e-12);
    expect_tensor_near(kernels::matmul_at(a, c), kernels::matmul(a.transposed(), c), 1e-12);
}

TEST(Tensor, Broadcast) {
    EXPECT_EQ(broadcast_shapes({2, 3}, {3}), (Shape{2, 3}));
    EXPECT_EQ(broadcast_shapes({2, 1}, {1, 4}), (Shape{2, 4}));
    EXPECT_THROW(broadcast_shapes({2, 3}, {2}), DimensionError);
    const Tensor g = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(sum_to_shape(g, {3}), Tensor::vector({5, 7, 9}));
    EXPECT_EQ(sum_to_shape(g, {2, 1}), Tensor(Shape{2, 1}, std::vector<double>{6, 15}));
}

TEST(Ops, ElementwiseTrivial) {
    Tape tape;
    Var a = tape.constant(Tensor::vector({1.5, -2}));
    EXPECT_EQ((a + tape.constant(Tensor::zeros({2}))).value(), a.value());
    EXPECT_EQ((a * tape.constant(Tensor::ones({2}))).value(), a.value());
}

TEST(Ops, ElementwiseBroadcastHand) {
    Tape tape;
    Var r = tape.constant(Tensor::vector({1, 2})) + tape.constant(Tensor::vector({10}));
    EXPECT_EQ(r.value(), Tensor::vector({11, 12}));
}

TEST(Ops, ElementwiseBadBroadcastThrows) {
    Tape tape;
    EXPECT_THROW(tape.constant(Tensor::zeros({3})) + tape.constant(Tensor::zeros({2})), DimensionError);
}

TEST(Ops, Reductions) {
    Tape tape;
    EXPECT_DOUBLE_EQ(sum(tape.constant(Tensor::vector({1, 2, 3}))).item(), 6.0);
    EXPECT_DOUBLE_EQ(mean(tape.constant(Tensor::full({4, 3}, 2.5))).item(), 2.5);
    Var m = max(tape.constant(Tensor::matrix({{1, 2}, {3, 0}})), 1);
    EXPECT_EQ(m.value(), Tensor::vector({2, 3}));
    EXPECT_THROW(sum(tape.constant(Tensor::zeros({2, 2})), 2), DimensionError);
}

TEST(Ops, MaxTieRoutesToFirst) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({3, 1, 3}));
    tape.backward(max(x));
    EXPECT_EQ(x.grad(), Tensor::vector({1, 0, 0}));
}

TEST(Ops, LogOfNonPositiveThrows) {
    Tape tape;
    EXPECT_THROW(log(tape.constant(Tensor::vector({1, 0}))), NumericError);
}

TEST(Backward, SimpleExample) {
    // z = (x + y) w
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(1));
    Var y = tape.leaf(Tensor::scalar(2));
    Var w = tape.leaf(Tensor::scalar(3));
    Var z = (x + y) * w;
    tape.backward(z);
    EXPECT_DOUBLE_EQ(x.grad().item(), 3.0);
    EXPECT_DOUBLE_EQ(y.grad().item(), 3.0);
    EXPECT_DOUBLE_EQ(w.grad().item(), 3.0);
}

TEST(Backward, SimpleExampleSymbolic) {
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
        const double xv = rng.uniform(-3, 3), yv = rng.uniform(-3, 3), wv = rng.uniform(-3, 3);
        Tape tape;
        Var x = tape.leaf(Tensor::scalar(xv));
        Var y = tape.leaf(Tensor::scalar(yv));
        Var w = tape.leaf(Tensor::scalar(wv));
        tape.backward((x + y) * w);
        EXPECT_DOUBLE_EQ(x.grad().item(), wv);
        EXPECT_DOUBLE_EQ(w.grad().item(), xv + yv);
    }
}

TEST(Backward, Identity) {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(4));
    tape.backward(x);
    EXPECT_DOUBLE_EQ(x.grad().item(), 1.0);
}

TEST(Backward, AccumulatesAcrossUses) {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(0.7));
    tape.backward(x + x);
    EXPECT_EQ(x.grad().item(), 2.0);
}

TEST(Backward, NonScalarLossThrows) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1, 2}));
    EXPECT_THROW(tape.backward(x * 2.0), DimensionError);
}

TEST(Backward, Deterministic) {
    auto run = [] {
        Rng rng(5);
        Tape tape;
        Var a = tape.leaf(rng.normal_tensor({3, 4}));
        Var b = tape.leaf(rng.normal_tensor({4, 2}));
        tape.backward(sum(tanh(matmul(a, b))));
        return std::pair{a.grad(), b.grad()};
    };
    const auto [a1, b1] = run();
    const auto [a2, b2] = run();
    EXPECT_EQ(a1, a2);
    EXPECT_EQ(b1, b2);
}

TEST(Backward, ReachableNodesHaveMatchingGradShapes) {
    Rng rng(2);
    Tape tape;
    Var a = tape.leaf(rng.normal_tensor({2, 3}));
    Var b = tape.leaf(rng.normal_tensor({3}));
    Var c = a * b;
    Var d = sum(c, 0);
    tape.backward(sum(d));
    EXPECT_EQ(a.grad().shape(), a.shape());
    EXPECT_EQ(b.grad().shape(), b.shape());
    EXPECT_EQ(c.grad().shape(), c.shape());
    EXPECT_EQ(d.grad().shape(), d.shape());
}

TEST(Backward, ParamBindingSharesNode) {
    Tensor w = Tensor::vector({1, 2});
    Tape tape;
    Var a = tape.param(w);
    Var b = tape.param(w);
    EXPECT_EQ(a.id(), b.id());
    tape.backward(sum(a * b));
    EXPECT_EQ(*tape.param_grad(w), Tensor::vector({2, 4}));
}

TEST(GradCheck, Square) {
    const GradCheckReport r = grad_check([](Tape&, std::span<const Var> in) { return sum(square(in[0])); },
                                         {Tensor::scalar(3)});
    ASSERT_EQ(r.diffs.size(), 1u);
    EXPECT_NEAR(r.diffs[0].analytic, 6.0, 1e-12);
    EXPECT_LT(r.diffs[0].abs_diff, 1e-6);
}

TEST(GradCheck, Constant) {
    const GradCheckReport r = grad_check(
        [](Tape& t, std::span<const Var> in) { return sum(in[0] * 0.0) + t.constant(Tensor::scalar(2)); },
        {Tensor::vector({1, 2})});
    for (const auto& d : r.diffs) {
        EXPECT_EQ(d.analytic, 0.0);
        EXPECT_EQ(d.abs_diff, 0.0);
    }
}

TEST(GradCheck, Product) {
    const GradCheckReport r =
        grad_check([](Tape&, std::span<const Var> in) { return sum(in[0] * in[1]); },
                   {Tensor::scalar(2), Tensor::scalar(5)});
    ASSERT_EQ(r.diffs.size(), 2u);
    EXPECT_NEAR(r.diffs[0].analytic, 5.0, 1e-12);
    EXPECT_NEAR(r.diffs[1].analytic, 2.0, 1e-12);
    EXPECT_TRUE(r.passed());
}

TEST(GradCheck, DetectsWrongGradient) {
    const GradCheckReport r = grad_check(
        [](Tape& t, std::span<const Var> in) {
            Var x = in[0];
            return t.record(x.value(), {x}, [](const Tensor& g, std::span<Tensor* const> pg) {
                       *pg[0] += g;
                       *pg[0] += g;
                   }) *
                   1.0;
        },
        {Tensor::scalar(1.0)});
    EXPECT_FALSE(r.passed());
}

// Property: every differentiable op agrees with finite differences on inputs in [-2, 2].

TEST(GradCheckOps, Arithmetic) {
    expect_gradients([](Tape&, std::span<const Var> in) { return sum((in[0] + in[1]) * in[0] - in[1]); },
                     {{2, 3}, {3}}, 1);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(in[0] / (square(in[1]) + 1.0)); },
                     {{2, 3}, {2, 1}}, 2);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(-in[0] * 3.0 + 1.0); }, {{4}}, 3);
}

TEST(GradCheckOps, MatmulLinearTranspose) {
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(square(matmul(in[0], in[1]))); },
                     {{2, 3}, {3, 4}}, 4);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(tanh(linear(in[0], in[1], in[2]))); },
                     {{3, 4}, {2, 4}, {2}}, 5);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(linear(in[0], in[1]) * 0.5); }, {{4}, {3, 4}},
                     6);
    expect_gradients(
        [](Tape&, std::span<const Var> in) { return sum(square(transpose(in[0])) * reshape(in[1], {3, 2})); },
        {{2, 3}, {6}}, 7);
}

TEST(GradCheckOps, Reductions) {
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(square(sum(in[0], 1))); }, {{3, 4}}, 8);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(square(mean(in[0], 0, true))); }, {{3, 4}}, 9);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(max(in[0], 1)); }, {{3, 4}}, 10);
}

TEST(GradCheckOps, Pointwise) {
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(exp(in[0]) + tanh(in[0]) + sigmoid(in[0])); },
                     {{5}}, 11);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(log(square(in[0]) + 0.5)); }, {{5}}, 12);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(sqrt(square(in[0]) + 1.0)); }, {{5}}, 13);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(log_sigmoid(in[0] * 3.0)); }, {{5}}, 14);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(relu(in[0]) + leaky_relu(in[0], 0.1)); },
                     {{6}}, 15);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(abs(in[0])); }, {{6}}, 16);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(minimum(in[0], in[1])); }, {{6}, {6}}, 17);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(square(clamp(in[0], -1, 1))); }, {{6}}, 18);
}

TEST(GradCheckOps, SoftmaxFamily) {
    expect_gradients(
        [](Tape& t, std::span<const Var> in) {
            return sum(softmax(in[0]) * t.constant(Tensor::matrix({{1, -2, 3}, {0.5, 2, -1}})));
        },
        {{2, 3}}, 19);
    expect_gradients([](Tape&, std::span<const Var> in) { return sum(square(log_softmax(in[0]))); }, {{2, 4}}, 20);
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            const std::vector<std::size_t> targets{2, 0, 1};
            return cross_entropy_logits(in[0], targets);
        },
        {{3, 4}}, 21);
}

TEST(GradCheckOps, Indexing) {
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            const std::vector<std::size_t> ids{2, 0, 2};
            return sum(square(gather_rows(in[0], ids)));
        },
        {{3, 2}}, 22);
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            const std::vector<std::size_t> a{2, 0};
            const std::vector<std::size_t> b{1, 3};
            Var x = select_cols(in[0], a);
            Var y = select_cols(in[0], b);
            return sum(square(merge_cols(tanh(x), a, y * 2.0, b)));
        },
        {{2, 4}}, 23);
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            std::vector<Var> parts{slice_cols(in[0], 1, 2), slice_cols(in[0], 0, 1)};
            return sum(square(concat_cols(parts)) * 0.5);
        },
        {{3, 3}}, 24);
}

TEST(Ops, StopGradientAndStraightThrough) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1, 2}));
    Var st = straight_through(Tensor::vector({5, 5}), x);
    EXPECT_EQ(st.value(), Tensor::vector({5, 5}));
    tape.backward(sum(st * 3.0) + sum(stop_gradient(x) * 7.0));
    EXPECT_EQ(x.grad(), Tensor::vector({3, 3}));
}

TEST(Ops, SoftmaxRowsSumToOne) {
    Rng rng(8);
    const Tensor s = kernels::softmax_rows(rng.normal_tensor({5, 7}, 4.0));
    for (std::size_t r = 0; r < 5; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
            EXPECT_GE(s.at(r, c), 0.0);
            total += s.at(r, c);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Rng, Reproducible) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.next_u64(), b.next_u64());
    }
}

TEST(Rng, SplitMixReferenceValues) {
    // First outputs of SplitMix64 seeded with 0.
    Rng r(0);
    EXPECT_EQ(r.next_u64(), 0xE220A8397B1DCDAFull);
    EXPECT_EQ(r.next_u64(), 0x6E789E6AA1B965F4ull);
    EXPECT_EQ(r.next_u64(), 0x06C45D188009454Full);
}

TEST(Rng, SampleWithoutReplacementDistinct) {
    Rng r(1);
    auto idx = r.sample_without_replacement(20, 20);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_EQ(idx[i], i);
    }
    EXPECT_THROW(r.sample_without_replacement(3, 4), DomainError);
}

TEST(Rng, NormalMoments) {
    Rng r(9);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    const double m = s / n;
    EXPECT_NEAR(m, 0.0, 3.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n - m * m, 1.0, 3.0 * std::sqrt(2.0 / n));
}

}  // namespace
}  // namespace deskml
