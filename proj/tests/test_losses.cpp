#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "deskml/losses.hpp"
#include "support.hpp"

namespace deskml {
namespace {

using testing::expect_gradients;

Tensor random_distribution(Rng& rng, std::size_t n) {
    Tensor p(Shape{n});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = rng.uniform(0.01, 1.0);
        total += p[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        p[i] /= total;
    }
    return p;
}

TEST(Mse, Values) {
    Tape t;
    EXPECT_EQ(mse(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({1, 2}))).item(), 0.0);
    EXPECT_EQ(mse(t.constant(Tensor::vector({0})), t.constant(Tensor::vector({2}))).item(), 4.0);
    EXPECT_DOUBLE_EQ(mse(t.constant(Tensor::vector({1, 3})), t.constant(Tensor::vector({2, 5}))).item(), 2.5);
    EXPECT_THROW(mse(t.constant(Tensor::vector({1, 3})), t.constant(Tensor::vector({2, 5, 1}))), DimensionError);
}

TEST(L1, Values) {
    Tape t;
    EXPECT_EQ(l1(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({1, 2}))).item(), 0.0);
    EXPECT_EQ(l1(t.constant(Tensor::vector({0})), t.constant(Tensor::vector({-3}))).item(), 3.0);
    EXPECT_DOUBLE_EQ(l1(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({0, 4}))).item(), 1.5);
}

TEST(Entropy, Values) {
    EXPECT_EQ(entropy(Tensor::vector({1, 0, 0})), 0.0);
    EXPECT_DOUBLE_EQ(entropy(Tensor::vector({0.5, 0.5})), 1.0);
    EXPECT_DOUBLE_EQ(entropy(Tensor::vector({0.25, 0.25, 0.25, 0.25})), 2.0);
    EXPECT_NEAR(entropy(Tensor::vector({0.5, 0.5}), LogBase::e), std::log(2.0), 1e-15);
    EXPECT_THROW(entropy(Tensor::vector({0.5, 0.6})), DomainError);
    EXPECT_THROW(entropy(Tensor::vector({1.5, -0.5})), DomainError);
}

TEST(CrossEntropyDist, Values) {
    const Tensor p = Tensor::vector({0.2, 0.3, 0.5});
    EXPECT_NEAR(cross_entropy(p, p), entropy(p), 1e-12);
    const Tensor q = Tensor::vector({0.1, 0.6, 0.3});
    EXPECT_NEAR(cross_entropy(Tensor::vector({0, 1, 0}), q), -std::log2(0.6), 1e-12);
    const double hand = -0.5 * std::log2(0.9) - 0.5 * std::log2(0.1);
    EXPECT_NEAR(cross_entropy(Tensor::vector({0.5, 0.5}), Tensor::vector({0.9, 0.1})), hand, 1e-12);
    EXPECT_NEAR(hand, 1.737, 5e-4);
    EXPECT_THROW(cross_entropy(Tensor::vector({0.5, 0.5}), Tensor::vector({1, 0})), NumericError);
}

TEST(Kl, Values) {
    const Tensor p = Tensor::vector({0.2, 0.3, 0.5});
    EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-15);
    EXPECT_NEAR(kl_divergence(Tensor::vector({1, 0}), Tensor::vector({0.5, 0.5})), 1.0, 1e-12);
}

TEST(Kl, EqualsCrossEntropyMinusEntropy) {
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const Tensor p = random_distribution(rng, 5);
        const Tensor q = random_distribution(rng, 5);
        EXPECT_NEAR(kl_divergence(p, q), cross_entropy(p, q) - entropy(p), 1e-12);
    }
}

TEST(Kl, GibbsInequality) {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const Tensor p = random_distribution(rng, 4);
        const Tensor q = random_distribution(rng, 4);
        EXPECT_GE(cross_entropy(p, q, LogBase::e), entropy(p, LogBase::e) - 1e-12);
        EXPECT_NEAR(cross_entropy(p, p, LogBase::e), entropy(p, LogBase::e), 1e-12);
    }
}

TEST(CrossEntropyLoss, SmallProbability) {
    Tape t;
    Var logits = t.constant(Tensor::matrix({{std::log(0.001), std::log(0.999)}}));
    const std::vector<std::size_t> target{0};
    EXPECT_NEAR(cross_entropy_loss(logits, target).item(), 6.908, 0.05);
    EXPECT_NEAR(cross_entropy_loss(logits, target).item(), -std::log(0.001), 1e-12);
}

TEST(CrossEntropyLoss, UniformAndConfident) {
    Tape t;
    const std::vector<std::size_t> target{3, 1};
    EXPECT_NEAR(cross_entropy_loss(t.constant(Tensor::full({2, 5}, 0.7)), target).item(), std::log(5.0), 1e-12);
    Var sure = t.constant(Tensor::matrix({{0, 0, 0, 40, 0}, {0, 40, 0, 0, 0}}));
    EXPECT_LT(cross_entropy_loss(sure, target).item(), 1e-15);
    EXPECT_NEAR(cross_entropy_loss(sure, Tensor::matrix({{0, 0, 0, 1, 0}, {0, 1, 0, 0, 0}})).item(),
                cross_entropy_loss(sure, target).item(), 1e-15);
    const std::vector<std::size_t> bad{5, 0};
    EXPECT_THROW(cross_entropy_loss(sure, bad), DomainError);
}

TEST(CrossEntropyLoss, GradientIsSoftmaxMinusOneHot) {
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
        Tape t;
        Var logits = t.leaf(rng.normal_tensor({1, 4}, 2.0));
        const std::vector<std::size_t> target{static_cast<std::size_t>(i % 4)};
        t.backward(cross_entropy_loss(logits, target));
        Tensor expected = kernels::softmax_rows(logits.value());
        expected[target[0]] -= 1.0;
        testing::expect_tensor_near(logits.grad(), expected, 1e-12);
    }
}

TEST(Bce, Values) {
    Tape t;
    EXPECT_NEAR(binary_cross_entropy(Tensor::vector({0.5}), t.constant(Tensor::vector({0.5}))).item(), std::log(2.0),
                1e-15);
    EXPECT_LT(binary_cross_entropy(Tensor::vector({1}), t.constant(Tensor::vector({1 - 1e-12}))).item(), 1e-11);
    const double hand = (-std::log(0.9) - std::log(0.8)) / 2.0;
    EXPECT_NEAR(binary_cross_entropy(Tensor::vector({1, 0}), t.constant(Tensor::vector({0.9, 0.2}))).item(), hand,
                1e-12);
    EXPECT_NEAR(hand, 0.164, 5e-4);
    EXPECT_TRUE(std::isfinite(binary_cross_entropy(Tensor::vector({1}), t.constant(Tensor::vector({0}))).item()));
}

TEST(Distillation, Values) {
    Tape t;
    const Tensor teacher = Tensor::matrix({{0.8, 0.2}});
    EXPECT_NEAR(distillation_loss(teacher, t.constant(Tensor::matrix({{std::log(0.8), std::log(0.2)}})), 1.0).item(),
                0.0, 1e-15);
    const double hand = 0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5);
    EXPECT_NEAR(distillation_loss(teacher, t.constant(Tensor::matrix({{0, 0}})), 1.0).item(), hand, 1e-12);
    EXPECT_NEAR(hand, 0.1927, 5e-5);
    Rng rng(4);
    for (double temp : {0.5, 2.0, 5.0}) {
        const double v =
            distillation_loss(Tensor::full({1, 3}, 1.0 / 3), t.constant(rng.normal_tensor({1, 3}, 3)), temp).item();
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
    }
    EXPECT_THROW(distillation_loss(teacher, t.constant(Tensor::matrix({{0, 0}})), 0.0), DomainError);
}

TEST(Clip, Values) {
    Tape t;
    const double hand = std::log1p(std::exp(-10.0));
    EXPECT_NEAR(clip_contrastive_loss(t.constant(Tensor::matrix({{10, 0}, {0, 10}}))).item(), hand, 1e-15);
    EXPECT_NEAR(hand, 4.54e-5, 5e-8);
    EXPECT_NEAR(clip_contrastive_loss(t.constant(Tensor::full({3, 3}, 2.0))).item(), std::log(3.0), 1e-12);
    EXPECT_LT(clip_contrastive_loss(t.constant(Tensor::matrix({{80, 0}, {0, 80}}))).item(), 1e-30);
    EXPECT_THROW(clip_contrastive_loss(t.constant(Tensor::zeros({2, 3}))), DimensionError);
}

TEST(Clip, PermutationInvariant) {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Tensor s = rng.normal_tensor({4, 4}, 2.0);
        const auto perm = rng.sample_without_replacement(4, 4);
        Tensor ps(Shape{4, 4});
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                ps.at(r, c) = s.at(perm[r], perm[c]);
            }
        }
        Tape t;
        EXPECT_NEAR(clip_contrastive_loss(t.constant(s)).item(), clip_contrastive_loss(t.constant(ps)).item(), 1e-12);
    }
}

TEST(Gan, Values) {
    Tape t;
    const GanLosses half = gan_losses(t.constant(Tensor::vector({0.5})), t.constant(Tensor::vector({0.5})));
    EXPECT_NEAR(half.discriminator.item(), 2 * std::log(2.0), 1e-15);
    EXPECT_NEAR(half.generator.item(), std::log(2.0), 1e-15);
    const GanLosses fooled = gan_losses(t.constant(Tensor::vector({0.5})), t.constant(Tensor::vector({1 - 1e-12})));
    EXPECT_LT(fooled.generator.item(), 1e-11);
    const GanLosses sharp = gan_losses(t.constant(Tensor::vector({1 - 1e-12})), t.constant(Tensor::vector({1e-12})));
    EXPECT_LT(sharp.discriminator.item(), 1e-11);
}

TEST(EntropyMin, Values) {
    Tape t;
    EXPECT_LT(entropy_min_loss(t.constant(Tensor::matrix({{50, 0, 0}}))).item(), 1e-18);
    EXPECT_NEAR(entropy_min_loss(t.constant(Tensor::zeros({2, 4}))).item(), std::log(4.0), 1e-12);
    const double p = 1.0 / (1.0 + std::exp(-1.0));
    const double hand = -(p * std::log(p) + (1 - p) * std::log(1 - p));
    EXPECT_NEAR(entropy_min_loss(t.constant(Tensor::matrix({{1, 0}}))).item(), hand, 1e-12);
    EXPECT_NEAR(hand, 0.5822, 5e-5);
}

TEST(PseudoLabel, Threshold) {
    EXPECT_EQ(pseudo_label(Tensor::vector({0.97, 0.03}), 0.9), std::optional<std::size_t>{0});
    EXPECT_EQ(pseudo_label(Tensor::vector({0.6, 0.4}), 0.9), std::nullopt);
    EXPECT_EQ(pseudo_label(Tensor::vector({0.9, 0.1}), 0.9), std::optional<std::size_t>{0});
    EXPECT_EQ(pseudo_label(Tensor::vector({0.05, 0.95}), 0.9), std::optional<std::size_t>{1});
    EXPECT_THROW(pseudo_label(Tensor::vector({0.9, 0.1}), 0.5), DomainError);
}

TEST(Losses, NonNegativeOnRandomInputs) {
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
        Tape t;
        Var a = t.constant(rng.normal_tensor({3, 4}));
        Var b = t.constant(rng.normal_tensor({3, 4}));
        const std::vector<std::size_t> targets{0, 3, 1};
        EXPECT_GE(mse(a, b).item(), 0.0);
        EXPECT_GE(l1(a, b).item(), 0.0);
        EXPECT_GE(cross_entropy_loss(a, targets).item(), 0.0);
        EXPECT_GE(entropy_min_loss(a).item(), 0.0);
        EXPECT_GE(clip_contrastive_loss(t.constant(rng.normal_tensor({3, 3}))).item(), 0.0);
        Var pr = t.constant(rng.uniform_tensor({4}, 0.01, 0.99));
        EXPECT_GE(binary_cross_entropy(rng.uniform_tensor({4}, 0, 1), pr).item(), 0.0);
    }
}

TEST(GradCheckLosses, All) {
    expect_gradients([](Tape& t, std::span<const Var> in) { return mse(in[0], t.constant(Tensor::ones({2, 3}))); },
                     {{2, 3}}, 10);
    expect_gradients([](Tape& t, std::span<const Var> in) { return l1(in[0], t.constant(Tensor::full({5}, 3.0))); },
                     {{5}}, 11);
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            const std::vector<std::size_t> y{1, 0};
            return cross_entropy_loss(in[0], y);
        },
        {{2, 3}}, 12);
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            return binary_cross_entropy(Tensor::vector({1, 0, 1}), sigmoid(in[0]));
        },
        {{3}}, 13);
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            return distillation_loss(Tensor::matrix({{0.7, 0.2, 0.1}}), in[0], 2.0);
        },
        {{1, 3}}, 14);
    expect_gradients([](Tape&, std::span<const Var> in) { return clip_contrastive_loss(in[0]); }, {{3, 3}}, 15);
    expect_gradients(
        [](Tape&, std::span<const Var> in) {
            const GanLosses g = gan_losses(sigmoid(in[0]), sigmoid(in[1]));
            return g.discriminator + g.generator;
        },
        {{4}, {4}}, 16);
    expect_gradients([](Tape&, std::span<const Var> in) { return entropy_min_loss(in[0]); }, {{2, 4}}, 17);
}

}  // namespace
}  // namespace deskml
