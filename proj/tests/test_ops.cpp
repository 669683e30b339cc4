// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pano/ops.hpp"

#include <cmath>
#include <random>

using namespace pano;
using namespace pano::ops;

TEST_CASE("conv2d: identity kernel leaves the input unchanged") {
    Tensor<float> x = Tensor<float>::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor<float> w = Tensor<float>::from({1, 1, 1, 1}, {1});
    Tensor<float> none;
    Tensor<float> y = conv2d(x, w, none, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d: all-ones 2x2 kernel sums the window") {
    Tensor<float> x = Tensor<float>::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor<float> w = Tensor<float>::from({1, 1, 2, 2}, {1, 1, 1, 1});
    Tensor<float> none;
    Tensor<float> y = conv2d(x, w, none, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.data()[0] == 10.0f);  // hand summation: 1+2+3+4
}

TEST_CASE("conv2d: 4x4 stride-2 pad-1 halves 256x1024") {
    Tensor<float> x = Tensor<float>::zeros({1, 4, 256, 1024});
    Tensor<float> w = Tensor<float>::zeros({2, 4, 4, 4});
    Tensor<float> none;
    Tensor<float> y = conv2d(x, w, none, 2, 1);
    CHECK(y.shape() == Shape{1, 2, 128, 512});
}

TEST_CASE("conv2d: channel mismatch is rejected with both shapes named") {
    Tensor<float> x = Tensor<float>::zeros({1, 3, 8, 8});
    Tensor<float> w = Tensor<float>::zeros({2, 4, 3, 3});
    Tensor<float> none;
    try {
        conv2d(x, w, none, 1, 0);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(1,3,8,8)") != std::string::npos);
        CHECK(msg.find("(2,4,3,3)") != std::string::npos);
    }
}

TEST_CASE("conv2d_transpose: 3x3 stride-1 pad-1 preserves spatial dims") {
    Tensor<float> x = Tensor<float>::zeros({1, 2, 8, 8});
    Tensor<float> w = Tensor<float>::zeros({2, 3, 3, 3});
    Tensor<float> none;
    CHECK(conv2d_transpose(x, w, none, 1, 1).shape() == Shape{1, 3, 8, 8});
}

TEST_CASE("conv2d_transpose: 1x1 identity kernel is the identity") {
    Tensor<float> x = Tensor<float>::from({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<float> w = Tensor<float>::from({1, 1, 1, 1}, {1});
    Tensor<float> none;
    Tensor<float> y = conv2d_transpose(x, w, none, 1, 0);
    REQUIRE(y.shape() == x.shape());
    for (int i = 0; i < 6; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("elementwise reference values") {
    Tensor<float> z = Tensor<float>::scalar(0.0f);
    CHECK(sigmoid(z).item() == doctest::Approx(0.5f));

    Tensor<float> t = Tensor<float>::from({2}, {-3.0f, 3.0f});
    Tensor<float> r = relu(t);
    CHECK(r.data()[0] == 0.0f);
    CHECK(r.data()[1] == 3.0f);

    Tensor<float> e = elu(Tensor<float>::scalar(-1.0f));
    CHECK(e.item() == doctest::Approx(std::exp(-1.0f) - 1.0f).epsilon(1e-6));

    // binary ops demand matching shapes unless one side is scalar
    Tensor<float> a = Tensor<float>::zeros({2, 2});
    Tensor<float> b = Tensor<float>::zeros({3});
    CHECK_THROWS_AS(add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(mul(a, b), std::invalid_argument);
    CHECK_NOTHROW(add(a, Tensor<float>::scalar(2.0f)));
}

TEST_CASE("softmax rows: normalized, uniform over ties") {
    Tensor<float> s = Tensor<float>::from({1, 2}, {0.0f, 0.0f});
    Tensor<float> w = softmax_rows(s, 0.1f);
    CHECK(w.data()[0] == doctest::Approx(0.5f));
    CHECK(w.data()[1] == doctest::Approx(0.5f));

    std::mt19937 rng(3);
    Tensor<float> m(random_uniform<float>({5, 7}, rng, -2, 2));
    Tensor<float> sm = softmax_rows(m, 0.1f);
    for (int i = 0; i < 5; ++i) {
        float rowsum = 0;
        for (int j = 0; j < 7; ++j) rowsum += sm.data()[i * 7 + j];
        CHECK(rowsum == doctest::Approx(1.0f).epsilon(1e-5));
    }
}

TEST_CASE("unfold counts sliding windows") {
    Tensor<float> x = Tensor<float>::zeros({1, 1, 8, 8});
    CHECK(unfold(x, 3, 1).shape() == Shape{1, 36, 9});
    CHECK(unfold(x, 8, 1).shape() == Shape{1, 1, 64});
    CHECK_THROWS_AS(unfold(x, 9, 1), std::invalid_argument);
}

TEST_CASE("unfold/fold adjoint pair reconstructs with uniform coverage") {
    std::mt19937 rng(5);
    Tensor<float> x(random_uniform<float>({1, 2, 6, 6}, rng, 0, 1));
    // Non-overlapping tiling: fold(unfold(x)) == x exactly.
    Tensor<float> back = fold_sum(unfold(x, 2, 2), 2, 6, 6, 2, 2);
    for (i64 i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);
}
