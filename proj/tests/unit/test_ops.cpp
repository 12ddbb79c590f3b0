// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "manet/ops.hpp"
#include "manet/rng.hpp"

namespace manet {
namespace {

TEST(ConvShape, OutputExtentFormula) {
    // floor((107-7)/2)+1 = 51
    EXPECT_EQ(conv_out_extent(107, 7, 2, 0), 51);
    // floor((51-3)/2)+1 = 25
    EXPECT_EQ(conv_out_extent(51, 3, 2, 0), 25);
    EXPECT_EQ(conv_out_extent(25, 5, 2, 0), 11);
    EXPECT_EQ(conv_out_extent(11, 3, 2, 0), 5);
    EXPECT_EQ(conv_out_extent(5, 3, 1, 0), 3);
    EXPECT_THROW(conv_out_extent(3, 5, 1, 0), ShapeError);
}

TEST(ConvShape, ForwardProducesFormulaShape) {
    Rng rng(7);
    ConvSpec spec{7, 7, 3, 4, 2, 0};
    auto input = Tensor<float>::randn({3, 107, 107}, rng);
    auto w = Tensor<float>::randn({4, 3, 7, 7}, rng, 0.05);
    auto b = Tensor<float>({4});
    auto out = conv2d_forward(input, w, b, spec);
    EXPECT_EQ(out.shape(), (std::vector<std::size_t>{4, 51, 51}));
}

// Shape law: output shape is a pure function of input shape and spec.
TEST(ConvShape, ShapeLawPropertyRandomSpecs) {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_index(5));
        const int stride = 1 + static_cast<int>(rng.uniform_index(3));
        const int pad = static_cast<int>(rng.uniform_index(3));
        const int cin = 1 + static_cast<int>(rng.uniform_index(3));
        const int cout = 1 + static_cast<int>(rng.uniform_index(4));
        const int in = k + static_cast<int>(rng.uniform_index(12));
        ConvSpec spec{k, k, cin, cout, stride, pad};
        auto input = Tensor<double>::randn(
            {static_cast<std::size_t>(cin), static_cast<std::size_t>(in), static_cast<std::size_t>(in)}, rng);
        auto w = Tensor<double>::randn({static_cast<std::size_t>(cout), static_cast<std::size_t>(cin),
                                        static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                                       rng, 0.1);
        auto b = Tensor<double>::randn({static_cast<std::size_t>(cout)}, rng, 0.1);
        auto out = conv2d_forward(input, w, b, spec);
        const auto expect = static_cast<std::size_t>(conv_out_extent(in, k, stride, pad));
        EXPECT_EQ(out.dim(0), static_cast<std::size_t>(cout));
        EXPECT_EQ(out.dim(1), expect);
        EXPECT_EQ(out.dim(2), expect);
        // Two-route check: im2col+GEMM path equals the direct reference.
        auto ref = conv2d_forward_direct(input, w, b, spec);
        EXPECT_LT(max_abs_diff(out, ref), 1e-12);
    }
}

TEST(Conv, ZeroInputGivesBiasOnly) {
    ConvSpec spec{3, 3, 1, 2, 1, 0};
    Tensor<float> input({1, 5, 5});
    Rng rng(3);
    auto w = Tensor<float>::randn({2, 1, 3, 3}, rng);
    Tensor<float> b({2});
    b[0] = 0.0f;
    b[1] = -1.5f;
    auto out = conv2d_forward(input, w, b, spec);
    for (std::size_t y = 0; y < out.dim(1); ++y)
        for (std::size_t x = 0; x < out.dim(2); ++x) {
            EXPECT_EQ(out.at3(0, y, x), 0.0f);
            EXPECT_EQ(out.at3(1, y, x), -1.5f);
        }
}

TEST(Conv, OneByOneZeroValueInput) {
    ConvSpec spec{1, 1, 1, 1, 1, 0};
    Tensor<float> input({1, 1, 1});
    Tensor<float> w({1, 1, 1, 1});
    w[0] = 3.0f;
    Tensor<float> b({1});
    auto out = conv2d_forward(input, w, b, spec);
    EXPECT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], 0.0f);
}

// Cross-correlation of a centered impulse reproduces the kernel rotated by
// 180 degrees around its center.
TEST(Conv, ImpulseResponseIsCrossCorrelation) {
    ConvSpec spec{3, 3, 1, 1, 1, 1};
    Tensor<float> input({1, 3, 3});
    input.at3(0, 1, 1) = 1.0f;
    Tensor<float> w({1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) w[i] = static_cast<float>(i + 1);
    Tensor<float> b({1});
    auto out = conv2d_forward(input, w, b, spec);
    ASSERT_EQ(out.shape(), (std::vector<std::size_t>{1, 3, 3}));
    EXPECT_EQ(out.at3(0, 1, 1), w.at4(0, 0, 1, 1)); // center equals kernel center
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            EXPECT_EQ(out.at3(0, y, x), w.at4(0, 0, 2 - y, 2 - x));
}

TEST(Conv, ShapeMismatchNamesOffendingDimension) {
    ConvSpec spec{3, 3, 3, 4, 1, 0};
    Tensor<float> input({2, 8, 8}); // wrong channel count
    Tensor<float> w({4, 3, 3, 3});
    Tensor<float> b({4});
    try {
        conv2d_forward(input, w, b, spec);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
    }
}

TEST(Conv, BackwardRejectsWrongGradShape) {
    ConvSpec spec{3, 3, 1, 1, 1, 0};
    Rng rng(5);
    auto input = Tensor<double>::randn({1, 6, 6}, rng);
    auto w = Tensor<double>::randn({1, 1, 3, 3}, rng);
    Tensor<double> bad_grad({1, 3, 3}); // forward output is 4x4
    EXPECT_THROW(conv2d_backward(bad_grad, input, w, spec), ShapeError);
}

TEST(Conv, BackwardZeroGradGivesZeroGrads) {
    ConvSpec spec{3, 3, 2, 3, 1, 0};
    Rng rng(11);
    auto input = Tensor<double>::randn({2, 6, 6}, rng);
    auto w = Tensor<double>::randn({3, 2, 3, 3}, rng);
    Tensor<double> grad({3, 4, 4});
    auto g = conv2d_backward(grad, input, w, spec);
    EXPECT_EQ(sum(g.weights), 0.0);
    EXPECT_EQ(sum(g.bias), 0.0);
    EXPECT_EQ(sum(g.input), 0.0);
}

// Single-position 1x1 conv reduces to the scalar chain rule:
// d/dw = input * grad summed over positions.
TEST(Conv, SinglePixelConvWeightGradIsInputTimesGrad) {
    ConvSpec spec{1, 1, 1, 1, 1, 0};
    Tensor<double> input({1, 2, 2});
    input[0] = 1.0; input[1] = 2.0; input[2] = 3.0; input[3] = 4.0;
    Tensor<double> w({1, 1, 1, 1});
    w[0] = 0.5;
    Tensor<double> grad({1, 2, 2});
    grad[0] = 0.1; grad[1] = 0.2; grad[2] = 0.3; grad[3] = 0.4;
    auto g = conv2d_backward(grad, input, w, spec);
    EXPECT_NEAR(g.weights[0], 0.1 * 1 + 0.2 * 2 + 0.3 * 3 + 0.4 * 4, 1e-12);
}

TEST(Relu, Example) {
    Tensor<float> x({3});
    x[0] = -1.0f; x[1] = 0.0f; x[2] = 2.0f;
    auto y = relu_forward(x);
    EXPECT_EQ(y[0], 0.0f);
    EXPECT_EQ(y[1], 0.0f);
    EXPECT_EQ(y[2], 2.0f);
}

TEST(Relu, Idempotent) {
    Rng rng(21);
    auto x = Tensor<double>::randn({64}, rng, 3.0);
    auto once = relu_forward(x);
    auto twice = relu_forward(once);
    EXPECT_EQ(once, twice);
}

TEST(Relu, NonFiniteInputRejectedNamingLayer) {
    Tensor<float> x({2});
    x[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        relu_forward(x);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("relu"), std::string::npos);
    }
    x[0] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(relu_forward(x), NumericError);
}

TEST(Lrn, MatchesHandFormula) {
    LrnSpec spec{3, 0.9, 0.75, 2.0};
    Tensor<double> x({3, 1, 1});
    x[0] = 1.0; x[1] = 2.0; x[2] = 3.0;
    auto y = lrn_forward(x, spec);
    // channel 1 window = {1,2,3}: S = 2 + 0.3*(1+4+9) = 6.2
    EXPECT_NEAR(y[1], 2.0 / std::pow(6.2, 0.75), 1e-12);
    // channel 0 window = {1,2} (clamped): S = 2 + 0.3*5 = 3.5
    EXPECT_NEAR(y[0], 1.0 / std::pow(3.5, 0.75), 1e-12);
}

TEST(Lrn, InvalidSpecRejected) {
    EXPECT_THROW(lrn_forward(Tensor<float>({1, 1, 1}), LrnSpec{4, 1e-4, 0.75, 2.0}), ConfigError);
    EXPECT_THROW(lrn_forward(Tensor<float>({1, 1, 1}), LrnSpec{5, 1e-4, -1.0, 2.0}), ConfigError);
}

TEST(MaxPool, ShapeExample) {
    Rng rng(31);
    auto x = Tensor<float>::randn({2, 51, 51}, rng);
    auto y = maxpool_forward(x, 3, 2);
    EXPECT_EQ(y.shape(), (std::vector<std::size_t>{2, 25, 25}));
}

TEST(MaxPool, SelectsMaxAndRoutesGradient) {
    Tensor<double> x({1, 2, 2});
    x[0] = 1; x[1] = 4; x[2] = 2; x[3] = 3;
    std::vector<std::int32_t> idx;
    auto y = maxpool_forward(x, 2, 1, &idx);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_EQ(y[0], 4.0);
    Tensor<double> g({1, 1, 1});
    g[0] = 2.5;
    auto dx = maxpool_backward(g, idx, x.shape());
    EXPECT_EQ(dx[1], 2.5);
    EXPECT_EQ(dx[0] + dx[2] + dx[3], 0.0);
}

TEST(Fc, MatchesManualProduct) {
    Tensor<double> w({2, 3});
    for (int i = 0; i < 6; ++i) w[i] = i + 1; // [[1,2,3],[4,5,6]]
    Tensor<double> b({2});
    b[0] = 0.5; b[1] = -0.5;
    Tensor<double> x({3, 1});
    x[0] = 1; x[1] = 0; x[2] = -1;
    auto y = fc_forward(w, b, x);
    EXPECT_NEAR(y[0], 1 - 3 + 0.5, 1e-12);
    EXPECT_NEAR(y[1], 4 - 6 - 0.5, 1e-12);
}

TEST(Dropout, DeterministicGivenSeed) {
    Rng a(42), b(42);
    Tensor<float> x = Tensor<float>::full({1000}, 1.0f);
    auto ra = dropout_forward(x, 0.5, a);
    auto rb = dropout_forward(x, 0.5, b);
    EXPECT_EQ(ra.mask, rb.mask);
    EXPECT_EQ(ra.output, rb.output);
    // Kept units are scaled by 1/keep.
    int kept = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (ra.output[i] != 0.0f) {
            EXPECT_FLOAT_EQ(ra.output[i], 2.0f);
            ++kept;
        }
    }
    EXPECT_GT(kept, 400);
    EXPECT_LT(kept, 600);
}

TEST(SoftmaxXent, SymmetricLogits) {
    Tensor<double> logits({2, 2}); // two samples, both logits (0,0)
    auto r = softmax_cross_entropy(logits, {0, 1});
    EXPECT_NEAR(r.probs[0], 0.5, 1e-12);
    EXPECT_NEAR(r.probs[2], 0.5, 1e-12);
    EXPECT_NEAR(r.losses[0], std::log(2.0), 1e-12); // either label costs ln 2
    EXPECT_NEAR(r.losses[1], std::log(2.0), 1e-12);
}

TEST(SoftmaxXent, ProbabilitiesSumToOne) {
    Rng rng(77);
    Tensor<double> logits({2, 32});
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-30.0, 30.0);
    std::vector<int> labels(32);
    for (auto& l : labels) l = rng.uniform_index(2);
    auto r = softmax_cross_entropy(logits, labels);
    for (std::size_t i = 0; i < 32; ++i) {
        const double pn = r.probs[i], pp = r.probs[32 + i];
        EXPECT_GE(pn, 0.0);
        EXPECT_LE(pn, 1.0);
        EXPECT_GE(pp, 0.0);
        EXPECT_LE(pp, 1.0);
        EXPECT_NEAR(pn + pp, 1.0, 1e-6);
    }
}

TEST(SoftmaxXent, NonFiniteRejected) {
    Tensor<double> logits({2, 1});
    logits[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(softmax_cross_entropy(logits, {0}), NumericError);
}

} // namespace
} // namespace manet
