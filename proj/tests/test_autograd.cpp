// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode engine checks. Every differentiable op is verified against
// the central finite-difference oracle in both precisions, and the engine
// invariants (accumulation, determinism, scalar-loss contract, reuse of a
// node by several consumers) are exercised directly.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pano/ops.hpp"

#include <cstring>
#include <random>
#include <vector>

using namespace pano;
using namespace pano::ops;

namespace {

template <typename T>
struct Tol;
template <>
struct Tol<float> {
    static constexpr float grad = 1e-2f;
};
template <>
struct Tol<double> {
    static constexpr double grad = 1e-5;
};

// Compares backward() gradients of a scalar-valued graph against the
// finite-difference oracle for each input.
template <typename T, typename F>
void gradcheck(F&& f, std::vector<Tensor<T>> inputs, T tol = Tol<T>::grad) {
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.clear_grad();
    }
    Tensor<T> loss = f(inputs);
    REQUIRE(loss.numel() == 1);
    backward(loss);
    for (size_t k = 0; k < inputs.size(); ++k) {
        auto fd = finite_difference<T>(
            [&](const Tensor<T>& probe) {
                std::vector<Tensor<T>> args = inputs;
                args[k] = probe;
                return f(args).item();
            },
            inputs[k], T(1e-3));
        const TensorData<T>* an = inputs[k].grad();
        REQUIRE(an != nullptr);
        for (size_t i = 0; i < fd.data.size(); ++i) {
            const T denom = std::max(T(1), std::abs(fd.data[i]));
            CHECK(std::abs(an->data[i] - fd.data[i]) / denom < tol);
        }
    }
}

template <typename T>
Tensor<T> rand_t(Shape s, std::mt19937& rng, T lo = T(-1), T hi = T(1)) {
    return Tensor<T>(random_uniform<T>(std::move(s), rng, lo, hi));
}

// Linear readout against a fixed pattern: validates the vjp with a generic
// upstream gradient while keeping finite-difference truncation error low.
template <typename T>
Tensor<T> read_out(const Tensor<T>& y) {
    TensorData<T> r = TensorData<T>::zeros(y.shape());
    const T pat[5] = {T(0.31), T(-0.72), T(1.13), T(0.54), T(-0.25)};
    for (i64 i = 0; i < y.numel(); ++i) r.data[i] = pat[i % 5];
    return sum_all(mul(y, Tensor<T>(r)));
}

}  // namespace

TEST_CASE_TEMPLATE("gradcheck: elementwise ops", T, float, double) {
    std::mt19937 rng(42);
    auto a = rand_t<T>({2, 3}, rng);
    auto b = rand_t<T>({2, 3}, rng);
    auto s = rand_t<T>({1}, rng);
    auto pos = rand_t<T>({2, 3}, rng, T(0.5), T(2));

    gradcheck<T>([](auto& v) { return sum_all(add(v[0], v[1])); }, {a, b});
    gradcheck<T>([](auto& v) { return sum_all(sub(v[0], v[1])); }, {a, b});
    gradcheck<T>([](auto& v) { return sum_all(mul(v[0], v[1])); }, {a, b});
    gradcheck<T>([](auto& v) { return sum_all(add(v[0], v[1])); }, {a, s});
    gradcheck<T>([](auto& v) { return sum_all(sub(v[0], v[1])); }, {a, s});
    gradcheck<T>([](auto& v) { return sum_all(mul(v[0], v[1])); }, {a, s});
    gradcheck<T>([](auto& v) { return sum_all(mul(v[1], v[0])); }, {a, s});
    gradcheck<T>([](auto& v) { return sum_all(add_scalar(v[0], T(0.7))); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(mul_scalar(v[0], T(-1.3))); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(maximum_scalar(v[0], T(0.1))); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(abs(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(relu(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(leaky_relu(v[0], T(0.2))); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(elu(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(sigmoid(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(ops::exp(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(recip(v[0])); }, {pos});
    gradcheck<T>([](auto& v) { return sum_all(ops::sqrt(v[0])); }, {pos});
    gradcheck<T>([](auto& v) { return sum_all(square(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return sum_all(one_minus(v[0])); }, {a});
}

TEST_CASE_TEMPLATE("gradcheck: reductions and broadcasts", T, float, double) {
    std::mt19937 rng(43);
    auto a = rand_t<T>({3, 4}, rng);
    auto v1 = rand_t<T>({3}, rng);
    auto s = rand_t<T>({1}, rng);

    gradcheck<T>([](auto& v) { return mean_all(v[0]); }, {a});
    gradcheck<T>([](auto& v) { return read_out(sum_per_item(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return read_out(expand_per_item(v[0], {3, 5})); }, {v1});
    gradcheck<T>([](auto& v) { return read_out(sum_last(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return read_out(expand_last(v[0], 4)); }, {v1});
    gradcheck<T>([](auto& v) { return read_out(broadcast_scalar(v[0], {2, 3})); }, {s});
    gradcheck<T>([](auto& v) { return read_out(l2_norm_per_item(v[0])); }, {a});
}

TEST_CASE_TEMPLATE("gradcheck: shape ops", T, float, double) {
    std::mt19937 rng(44);
    auto a = rand_t<T>({2, 6}, rng);
    auto b = rand_t<T>({2, 2}, rng);
    auto img = rand_t<T>({1, 2, 4, 6}, rng);

    gradcheck<T>([](auto& v) { return read_out(reshape(v[0], {3, 4})); }, {a});
    gradcheck<T>([](auto& v) { return read_out(slice_axis(v[0], 1, 1, 3)); }, {a});
    gradcheck<T>([](auto& v) { return read_out(embed_axis(v[0], 1, 2, 7)); }, {b});
    gradcheck<T>([](auto& v) { return read_out(concat_axis<T>({v[0], v[1]}, 1)); }, {a, b});
    gradcheck<T>([](auto& v) { return read_out(transpose2d(v[0])); }, {a});
    gradcheck<T>([](auto& v) { return read_out(pad2d(v[0], 1, 2, 1, 1, PadMode::zero)); }, {img});
    gradcheck<T>([](auto& v) { return read_out(pad2d(v[0], 1, 1, 2, 3, PadMode::circular_h)); }, {img});
    gradcheck<T>([](auto& v) { return read_out(pad2d_adjoint(v[0], 1, 1, 1, 2, PadMode::zero)); }, {img});
    gradcheck<T>([](auto& v) { return read_out(pad2d_adjoint(v[0], 1, 1, 1, 2, PadMode::circular_h)); },
                 {img});
    gradcheck<T>([](auto& v) { return read_out(upsample_nearest(v[0], 2, 2)); }, {img});
    gradcheck<T>([](auto& v) { return read_out(downsample_sum(v[0], 2, 3)); }, {img});
}

TEST_CASE_TEMPLATE("gradcheck: conv triad, bias, matmul, patches", T, float, double) {
    std::mt19937 rng(45);
    auto x = rand_t<T>({2, 2, 5, 6}, rng);
    auto w = rand_t<T>({3, 2, 3, 3}, rng, T(-0.5), T(0.5));
    auto bias = rand_t<T>({3}, rng);
    auto gy = rand_t<T>({2, 3, 2, 2}, rng);
    auto wt = rand_t<T>({2, 3, 3, 3}, rng, T(-0.5), T(0.5));
    auto m1 = rand_t<T>({3, 4}, rng);
    auto m2 = rand_t<T>({4, 2}, rng);
    auto m3 = rand_t<T>({5, 4}, rng);

    gradcheck<T>([](auto& v) { return read_out(conv2d_core(v[0], v[1], 2)); }, {x, w});
    gradcheck<T>([](auto& v) { return read_out(conv2d_dgrad_core(v[0], v[1], 2, 5, 6)); }, {gy, w});
    gradcheck<T>([](auto& v) { return read_out(conv2d_wgrad_core(v[0], v[1], 2, 3, 3)); }, {x, gy});
    gradcheck<T>([](auto& v) { return read_out(bias_add(v[0], v[1])); }, {x, rand_t<T>({2}, rng)});
    gradcheck<T>([](auto& v) { return read_out(sum_nhw(v[0])); }, {x});
    gradcheck<T>(
        [](auto& v) { return read_out(conv2d(v[0], v[1], v[2], 1, 1, PadMode::circular_h)); },
        {x, w, bias});
    gradcheck<T>(
        [](auto& v) { return read_out(conv2d_transpose(v[0], v[1], v[2], 1, 1, PadMode::zero)); },
        {x, wt, bias});
    gradcheck<T>(
        [](auto& v) { return read_out(conv2d_transpose(v[0], v[1], v[2], 2, 1, PadMode::circular_h)); },
        {x, wt, bias});
    gradcheck<T>([](auto& v) { return read_out(matmul(v[0], v[1])); }, {m1, m2});
    gradcheck<T>([](auto& v) { return read_out(matmul_nt(v[0], v[1])); }, {m1, m3});
    gradcheck<T>([](auto& v) { return read_out(gather_rows(v[0], {2, 0, 2})); }, {m1});
    gradcheck<T>([](auto& v) { return read_out(scatter_rows(v[0], {1, 4, 1}, 6)); }, {m1});
    gradcheck<T>([](auto& v) { return read_out(unfold(v[0], 2, 1)); }, {x});
    gradcheck<T>([](auto& v) { return read_out(fold_sum(v[0], 2, 4, 4, 2, 2)); },
                 {rand_t<T>({1, 4, 8}, rng)});
    gradcheck<T>([](auto& v) { return read_out(softmax_rows(v[0], T(0.5))); }, {m1});
}

TEST_CASE("backward: linear and sigmoid reference gradients") {
    // loss = sum(w . x) with constant x gives grad_w = x.
    Tensor<float> w = Tensor<float>::from({4}, {0.5f, -1.0f, 2.0f, 0.0f});
    w.set_requires_grad(true);
    Tensor<float> x = Tensor<float>::from({4}, {1.0f, 2.0f, 3.0f, 4.0f});
    backward(sum_all(mul(w, x)));
    for (int i = 0; i < 4; ++i) CHECK(w.grad()->data[i] == doctest::Approx(x.data()[i]));

    // loss = sigmoid(w) at w = 0 gives grad 0.25.
    Tensor<float> w0 = Tensor<float>::scalar(0.0f);
    w0.set_requires_grad(true);
    backward(sum_all(sigmoid(w0)));
    CHECK(w0.grad()->data[0] == doctest::Approx(0.25f).epsilon(1e-6));
}

TEST_CASE("backward: rejects non-scalar losses") {
    Tensor<float> w = Tensor<float>::ones({3});
    w.set_requires_grad(true);
    Tensor<float> y = mul_scalar(w, 2.0f);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("backward: repeated calls accumulate, grads double exactly") {
    std::mt19937 rng(46);
    Tensor<float> w = rand_t<float>({3, 3}, rng);
    w.set_requires_grad(true);
    Tensor<float> x = rand_t<float>({3, 3}, rng);
    auto make_loss = [&] { return sum_all(mul(w, x)); };
    backward(make_loss());
    std::vector<float> once = w.grad()->data;
    backward(make_loss());
    for (size_t i = 0; i < once.size(); ++i) CHECK(w.grad()->data[i] == 2.0f * once[i]);
    w.zero_grad();
    backward(make_loss());
    for (size_t i = 0; i < once.size(); ++i) CHECK(w.grad()->data[i] == once[i]);
}

TEST_CASE("backward: node reused by two consumers is visited once with full gradient") {
    // y = x*x + x  =>  dy/dx = 2x + 1
    Tensor<float> x = Tensor<float>::from({2}, {1.5f, -0.75f});
    x.set_requires_grad(true);
    backward(sum_all(add(mul(x, x), x)));
    CHECK(x.grad()->data[0] == doctest::Approx(2 * 1.5f + 1));
    CHECK(x.grad()->data[1] == doctest::Approx(2 * -0.75f + 1));
}

TEST_CASE("grad(): does not touch accumulators and supports create_graph") {
    Tensor<float> x = Tensor<float>::from({2}, {0.3f, -0.2f});
    x.set_requires_grad(true);
    auto g = grad(sum_all(square(x)), {x});
    CHECK(x.grad() == nullptr);
    CHECK(g[0].data()[0] == doctest::Approx(0.6f));
    CHECK(g[0].data()[1] == doctest::Approx(-0.4f));
}

TEST_CASE("double backward: gradient-of-gradient matches finite differences") {
    // F(w) = sum(R . d/dx sum(conv(x, w))) is a function of w through the
    // first-order input gradient; its w-gradient exercises the vjp of the
    // dgrad primitive.
    std::mt19937 rng(47);
    Tensor<double> x(random_uniform<double>({1, 2, 4, 4}, rng, -1, 1));
    Tensor<double> w(random_uniform<double>({2, 2, 3, 3}, rng, -1, 1));
    Tensor<double> r(random_uniform<double>({1, 2, 4, 4}, rng, -1, 1));
    w.set_requires_grad(true);

    auto F = [&](const Tensor<double>& wt) {
        Tensor<double> probe(x.value());
        probe.set_requires_grad(true);
        Tensor<double> y = sum_all(conv2d_core(probe, wt, 1));
        Tensor<double> gx = grad(y, {probe}, /*create_graph=*/true)[0];
        return sum_all(mul(gx, r));
    };
    backward(F(w));
    auto fd = finite_difference<double>([&](const Tensor<double>& wt) { return F(wt).item(); }, w, 1e-4);
    for (size_t i = 0; i < fd.data.size(); ++i) {
        CHECK(std::abs(w.grad()->data[i] - fd.data[i]) / std::max(1.0, std::abs(fd.data[i])) < 1e-6);
    }
}

TEST_CASE_TEMPLATE("conv/conv_transpose adjoint identity", T, float, double) {
    std::mt19937 rng(48);
    for (auto mode : {PadMode::zero, PadMode::circular_h}) {
        Tensor<T> x(random_uniform<T>({1, 2, 8, 8}, rng, T(-1), T(1)));
        Tensor<T> w(random_uniform<T>({3, 2, 3, 3}, rng, T(-1), T(1)));
        Tensor<T> none;
        Tensor<T> cx = conv2d(x, w, none, 1, 1, mode);
        Tensor<T> y(random_uniform<T>(cx.shape(), rng, T(-1), T(1)));
        Tensor<T> cty = conv2d_transpose(y, w, none, 1, 1, mode);
        const T lhs = sum_all(mul(cx, y)).item();
        const T rhs = sum_all(mul(x, cty)).item();
        CHECK(std::abs(lhs - rhs) / std::max(T(1), std::abs(rhs)) < T(1e-5));
    }
}

TEST_CASE("determinism: identical forward passes are bit-identical") {
    std::mt19937 rng(49);
    Tensor<float> x(random_uniform<float>({2, 3, 8, 8}, rng, -1, 1));
    Tensor<float> w(random_uniform<float>({4, 3, 4, 4}, rng, -1, 1));
    Tensor<float> b(random_uniform<float>({4}, rng, -1, 1));
    auto run = [&] { return sigmoid(conv2d(x, w, b, 2, 1, PadMode::circular_h)); };
    Tensor<float> y1 = run();
    Tensor<float> y2 = run();
    REQUIRE(y1.numel() == y2.numel());
    CHECK(std::memcmp(y1.data(), y2.data(), sizeof(float) * y1.numel()) == 0);
}

TEST_CASE("finite_difference oracle reference cases") {
    // f = sum(x^2) at x = [1,2] gives [2,4].
    Tensor<double> x = Tensor<double>::from({2}, {1.0, 2.0});
    auto fd = finite_difference<double>(
        [](const Tensor<double>& t) { return t.data()[0] * t.data()[0] + t.data()[1] * t.data()[1]; }, x, 1e-3);
    CHECK(fd.data[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fd.data[1] == doctest::Approx(4.0).epsilon(1e-6));

    // constant f gives zeros; linear f gives ones.
    fd = finite_difference<double>([](const Tensor<double>&) { return 3.5; }, x, 1e-3);
    CHECK(fd.data[0] == 0.0);
    CHECK(fd.data[1] == 0.0);
    fd = finite_difference<double>(
        [](const Tensor<double>& t) { return t.data()[0] + t.data()[1]; }, x, 1e-3);
    CHECK(fd.data[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fd.data[1] == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS(finite_difference<double>([](const Tensor<double>&) { return 0.0; }, x, 0.0));
}

TEST_CASE("second_order_grad_norm reference cases") {
    // D = sum of pixels, M = 0, 4 pixels: gradient is all-ones, norm 2.
    Tensor<float> xhat = Tensor<float>::from({1, 1, 2, 2}, {0.1f, 0.2f, 0.3f, 0.4f});
    Tensor<float> m0 = Tensor<float>::zeros({1, 1, 2, 2});
    auto critic = [](const Tensor<float>& t) { return sum_per_item(t); };
    Tensor<float> n = second_order_grad_norm<float>(critic, xhat, m0);
    CHECK(n.numel() == 1);
    CHECK(n.data()[0] == doctest::Approx(2.0f).epsilon(1e-6));

    // Full masking kills the norm.
    Tensor<float> m1 = Tensor<float>::ones({1, 1, 2, 2});
    CHECK(second_order_grad_norm<float>(critic, xhat, m1).data()[0] == doctest::Approx(0.0f).epsilon(1e-5));

    // Constant critic has zero input gradient.
    auto const_critic = [](const Tensor<float>& t) {
        return mul_scalar(sum_per_item(mul_scalar(t, 0.0f)), 1.0f);
    };
    CHECK(second_order_grad_norm<float>(const_critic, xhat, m0).data()[0] == doctest::Approx(0.0f).epsilon(1e-5));

    // Non-scalar-per-item critics are rejected.
    auto bad_critic = [](const Tensor<float>& t) { return t; };
    CHECK_THROWS_AS(second_order_grad_norm<float>(bad_critic, xhat, m0), std::invalid_argument);
}

TEST_CASE("tensor invariants: shape/data length and finite forward outputs") {
    CHECK_THROWS_AS(Tensor<float>::from({2, 3}, {1.0f, 2.0f}), std::invalid_argument);
    std::mt19937 rng(50);
    Tensor<float> x(random_uniform<float>({2, 2, 6, 6}, rng, -1, 1));
    Tensor<float> w(random_uniform<float>({3, 2, 4, 4}, rng, -1, 1));
    Tensor<float> b(random_uniform<float>({3}, rng, -1, 1));
    Tensor<float> y = elu(conv2d(x, w, b, 2, 1, PadMode::zero));
    for (i64 i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y.data()[i]));
}
