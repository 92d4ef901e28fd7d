#include <gtest/gtest.h>

#include <cmath>

#include "srm/tensor.hpp"
#include "test_util.hpp"

using namespace srm;

TEST(Elementwise, AddBasic) {
    Tensor a = Tensor::from({2}, {1, 2});
    Tensor b = Tensor::from({2}, {3, 4});
    Tensor c = add(a, b);
    EXPECT_EQ(c.values(), (std::vector<double>{4, 6}));
}

TEST(Elementwise, ReluBasic) {
    Tensor a = Tensor::from({3}, {-1, 0, 2});
    EXPECT_EQ(relu(a).values(), (std::vector<double>{0, 0, 2}));
}

TEST(Elementwise, SiluLimits) {
    Tensor z = Tensor::from({1}, {0.0});
    EXPECT_DOUBLE_EQ(silu(z).item(), 0.0);
    Tensor big = Tensor::from({1}, {20.0});
    EXPECT_NEAR(silu(big).item(), 20.0, 1e-6);
}

TEST(Elementwise, SoftplusMatchesReference) {
    Tensor a = Tensor::from({3}, {-2.0, 0.0, 5.0});
    Tensor y = softplus(a);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(y.values()[i], std::log1p(std::exp(a.values()[i])), 1e-12);
    }
}

TEST(Elementwise, BroadcastLeadingAxes) {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from({3}, {10, 20, 30});
    Tensor c = add(a, b);
    EXPECT_EQ(c.values(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
    Tensor s = Tensor::scalar(1.0);
    EXPECT_EQ(add(a, s).values(), (std::vector<double>{2, 3, 4, 5, 6, 7}));
}

TEST(Elementwise, BroadcastRejectsInteriorSingleton) {
    Tensor a = Tensor::from({2, 2, 2}, std::vector<double>(8, 1.0));
    Tensor b = Tensor::from({2, 1, 2}, std::vector<double>(4, 1.0));
    EXPECT_THROW(add(a, b), ShapeError);
}

TEST(Elementwise, ShapeMismatchThrows) {
    Tensor a = Tensor::from({2}, {1, 2});
    Tensor b = Tensor::from({3}, {1, 2, 3});
    EXPECT_THROW(add(a, b), ShapeError);
}

TEST(Elementwise, NonFiniteOutputDetected) {
    const bool saved = finite_checks();
    finite_checks() = true;
    Tensor a = Tensor::from({1}, {1.0});
    Tensor b = Tensor::from({1}, {0.0});
    EXPECT_THROW(div(a, b), NumericError);
    finite_checks() = saved;
}

TEST(Reshape, PreservesRowMajorSequence) {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = reshape(a, {3, 2});
    EXPECT_EQ(b.values(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
    EXPECT_THROW(reshape(a, {4, 2}), ShapeError);
}

TEST(Permute, TransposeAndRoundTrip) {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor t = permute(a, {1, 0});
    EXPECT_EQ(t.shape(), (Shape{3, 2}));
    EXPECT_EQ(t.values(), (std::vector<double>{1, 4, 2, 5, 3, 6}));

    Rng rng(11);
    Tensor x = Tensor::rand_uniform({2, 3, 4}, rng, -1, 1);
    Tensor y = permute(permute(x, {2, 0, 1}), {1, 2, 0});
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(y.values(), x.values());  // bit-exact round trip
    EXPECT_THROW(permute(x, {0, 0, 1}), ShapeError);
}

TEST(Flip, IsInvolution) {
    Rng rng(5);
    Tensor x = Tensor::rand_uniform({4, 3}, rng, -1, 1);
    EXPECT_EQ(flip(flip(x, 0), 0).values(), x.values());
    Tensor f = flip(x, 0);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_DOUBLE_EQ(f.values()[r * 3 + c], x.values()[(3 - r) * 3 + c]);
        }
    }
}

TEST(Backward, LinearCase) {
    Tensor w = Tensor::from({2}, {2, 3}, true);
    Tensor x = Tensor::from({2}, {1, 1}, true);
    Tape::active().clear();
    Tensor loss = sum(mul(w, x));
    Tape::active().backward(loss);
    EXPECT_EQ(w.grad(), (std::vector<double>{1, 1}));
    EXPECT_EQ(x.grad(), (std::vector<double>{2, 3}));
    Tape::active().clear();
}

TEST(Backward, ReluGrad) {
    Tensor x = Tensor::from({2}, {-1, 2}, true);
    Tape::active().clear();
    Tensor loss = sum(relu(x));
    Tape::active().backward(loss);
    EXPECT_EQ(x.grad(), (std::vector<double>{0, 1}));
    Tape::active().clear();
}

TEST(Backward, NonScalarLossThrows) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Tape::active().clear();
    Tensor y = relu(x);
    EXPECT_THROW(Tape::active().backward(y), ShapeError);
    Tape::active().clear();
}

TEST(Backward, RepeatedCallsAccumulateLeafGrads) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Tape::active().clear();
    Tensor loss = sum(mul(x, x));
    Tape::active().backward(loss);
    const std::vector<double> once = x.grad();
    Tape::active().backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i) {
        EXPECT_DOUBLE_EQ(x.grad()[i], 2 * once[i]);
    }
    Tape::active().clear();
}

TEST(Backward, IndependentSubgraphsAddUp) {
    Rng rng(3);
    Tensor a = Tensor::rand_uniform({4}, rng, -1, 1, true);
    Tensor b = Tensor::rand_uniform({4}, rng, -1, 1, true);

    // Separate backwards.
    Tape::active().clear();
    Tape::active().backward(sum(silu(a)));
    std::vector<double> ga = a.grad();
    Tape::active().clear();
    Tape::active().backward(sum(sigmoid(b)));
    std::vector<double> gb = b.grad();
    Tape::active().clear();

    a.zero_grad();
    b.zero_grad();
    Tensor joint = add(sum(silu(a)), sum(sigmoid(b)));
    Tape::active().backward(joint);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(a.grad()[i], ga[i], 1e-15);
        EXPECT_NEAR(b.grad()[i], gb[i], 1e-15);
    }
    Tape::active().clear();
}

// Finite-difference oracle across every differentiable primitive,
// 10 random seeds each.
TEST(GradCheck, AllPrimitives) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        {
            Tensor a = srmtest::random_tensor({3}, rng);
            Tensor b = srmtest::random_tensor({3}, rng);
            EXPECT_LT(srmtest::grad_check([&] { return mul(add(a, b), sub(a, b)); }, {a, b}, rng), 1e-6);
        }
        {
            Tensor a = srmtest::random_tensor({3}, rng, 0.5, 2.0);
            Tensor b = srmtest::random_tensor({3}, rng, 0.5, 2.0);
            EXPECT_LT(srmtest::grad_check([&] { return div(a, b); }, {a, b}, rng), 1e-6);
        }
        {
            Tensor a = srmtest::random_tensor({3}, rng, 0.1, 1.0);  // away from the relu kink
            EXPECT_LT(srmtest::grad_check([&] { return relu(a); }, {a}, rng), 1e-6);
        }
        {
            Tensor a = srmtest::random_tensor({3}, rng);
            EXPECT_LT(srmtest::grad_check([&] { return silu(a); }, {a}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return softplus(a); }, {a}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return sigmoid(a); }, {a}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return exp_op(a); }, {a}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return scale(neg(a), 1.7); }, {a}, rng), 1e-6);
        }
        {
            Tensor a = srmtest::random_tensor({2, 3}, rng);
            EXPECT_LT(srmtest::grad_check([&] { return permute(reshape(a, {3, 2}), {1, 0}); }, {a}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return flip(a, 1); }, {a}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return rowsum(a); }, {a}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return softmax(a, 1); }, {a}, rng), 1e-6);
        }
        {
            Tensor a = srmtest::random_tensor({2, 3}, rng);
            Tensor w = srmtest::random_tensor({3, 2}, rng);
            Tensor bias = srmtest::random_tensor({2}, rng);
            EXPECT_LT(srmtest::grad_check([&] { return matmul(a, w); }, {a, w}, rng), 1e-6);
            EXPECT_LT(srmtest::grad_check([&] { return linear(a, w, bias); }, {a, w, bias}, rng), 1e-6);
        }
        {
            Tensor a = srmtest::random_tensor({2, 3}, rng);
            Tensor b = srmtest::random_tensor({2, 3}, rng);
            EXPECT_LT(srmtest::grad_check([&] { return stack_first({slice_first(a, 1), slice_first(b, 0)}); },
                                          {a, b}, rng),
                      1e-6);
        }
        {
            Tensor a = srmtest::random_tensor({2, 3}, rng);
            Tensor b = srmtest::random_tensor({3}, rng);
            EXPECT_LT(srmtest::grad_check([&] { return mul(a, b); }, {a, b}, rng), 1e-6);
        }
    }
}

TEST(Tensor, InvariantDataMatchesShape) {
    EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
    Tensor t = Tensor::zeros({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    t.ensure_grad();
    EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Tensor, NoGradSuppressesRecording) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Tape::active().clear();
    {
        NoGradGuard ng;
        Tensor y = relu(x);
        EXPECT_FALSE(y.requires_grad());
    }
    EXPECT_EQ(Tape::active().size(), 0u);
}
