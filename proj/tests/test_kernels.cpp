// SPDX-License-Identifier: Apache-2.0
//
// Equivalence tests between the scalar reference kernels and whatever SIMD
// level the host selects. Elementwise kernels must match bit-exactly;
// accumulation kernels (dot/gemm/sums) are allowed FMA/reassociation
// rounding and are compared against a double-precision reference.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pano/kernels.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace pano;

namespace {

std::vector<float> random_vec(size_t n, std::mt19937& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>((rng() >> 8) * (1.0 / 16777216.0)) * 2.0f - 1.0f;
    return v;
}

double rel_err(double got, double want) {
    const double denom = std::max(1.0, std::abs(want));
    return std::abs(got - want) / denom;
}

bool simd_available() {
    return kern::level_supported(kern::Level::avx2) || kern::level_supported(kern::Level::neon);
}

kern::Level simd_level() {
    return kern::level_supported(kern::Level::avx2) ? kern::Level::avx2 : kern::Level::neon;
}

struct LevelGuard {
    kern::Level prev;
    explicit LevelGuard(kern::Level lvl) : prev(kern::active_level()) { kern::set_level(lvl); }
    ~LevelGuard() { kern::set_level(prev); }
};

}  // namespace

TEST_CASE("elementwise kernels match the scalar reference bit-exactly") {
    if (!simd_available()) return;
    const auto& s = kern::table_for(kern::Level::scalar);
    const auto& v = kern::table_for(simd_level());
    std::mt19937 rng(7);
    // Sizes straddle the vector width so remainder tails get exercised.
    for (size_t n : {1u, 3u, 7u, 8u, 9u, 16u, 31u, 64u, 257u}) {
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        std::vector<float> got(n), want(n);

        s.vadd(n, a.data(), b.data(), want.data());
        v.vadd(n, a.data(), b.data(), got.data());
        CHECK(got == want);

        s.vsub(n, a.data(), b.data(), want.data());
        v.vsub(n, a.data(), b.data(), got.data());
        CHECK(got == want);

        s.vmul(n, a.data(), b.data(), want.data());
        v.vmul(n, a.data(), b.data(), got.data());
        CHECK(got == want);

        s.vscale(n, 1.7f, a.data(), want.data());
        v.vscale(n, 1.7f, a.data(), got.data());
        CHECK(got == want);

        s.vaddc(n, a.data(), -0.3f, want.data());
        v.vaddc(n, a.data(), -0.3f, got.data());
        CHECK(got == want);

        s.vmaxc(n, a.data(), 0.1f, want.data());
        v.vmaxc(n, a.data(), 0.1f, got.data());
        CHECK(got == want);

        s.relu(n, a.data(), want.data());
        v.relu(n, a.data(), got.data());
        CHECK(got == want);

        s.lrelu(n, a.data(), 0.2f, want.data());
        v.lrelu(n, a.data(), 0.2f, got.data());
        CHECK(got == want);
    }
}

TEST_CASE("reduction kernels agree with a double-precision reference") {
    if (!simd_available()) return;
    const auto& s = kern::table_for(kern::Level::scalar);
    const auto& v = kern::table_for(simd_level());
    std::mt19937 rng(11);
    for (size_t n : {1u, 5u, 8u, 17u, 63u, 64u, 500u, 4096u}) {
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        double dref = 0.0, sref = 0.0, aref = 0.0;
        for (size_t i = 0; i < n; ++i) {
            dref += static_cast<double>(a[i]) * b[i];
            sref += a[i];
            aref += std::abs(a[i]);
        }
        CHECK(rel_err(s.dot(n, a.data(), b.data()), dref) < 1e-5);
        CHECK(rel_err(v.dot(n, a.data(), b.data()), dref) < 1e-5);
        CHECK(rel_err(s.sum(n, a.data()), sref) < 1e-5);
        CHECK(rel_err(v.sum(n, a.data()), sref) < 1e-5);
        CHECK(rel_err(s.asum(n, a.data()), aref) < 1e-5);
        CHECK(rel_err(v.asum(n, a.data()), aref) < 1e-5);
    }
}

TEST_CASE("gemm variants agree across levels within accumulation tolerance") {
    if (!simd_available()) return;
    const auto& s = kern::table_for(kern::Level::scalar);
    const auto& v = kern::table_for(simd_level());
    std::mt19937 rng(13);
    const struct { int m, n, k; } cases[] = {{1, 1, 1}, {3, 5, 7}, {8, 16, 4}, {13, 33, 21}, {32, 100, 64}};
    for (auto [m, n, k] : cases) {
        auto A = random_vec(static_cast<size_t>(m * k), rng);
        auto B = random_vec(static_cast<size_t>(k * n), rng);
        auto Bt = random_vec(static_cast<size_t>(n * k), rng);
        auto C0 = random_vec(static_cast<size_t>(m * n), rng);

        for (bool acc : {false, true}) {
            std::vector<float> want = C0, got = C0;
            s.gemm(m, n, k, A.data(), B.data(), want.data(), acc);
            v.gemm(m, n, k, A.data(), B.data(), got.data(), acc);
            for (int i = 0; i < m * n; ++i) CHECK(rel_err(got[i], want[i]) < 1e-5);

            want = C0;
            got = C0;
            s.gemm_nt(m, n, k, A.data(), Bt.data(), want.data(), acc);
            v.gemm_nt(m, n, k, A.data(), Bt.data(), got.data(), acc);
            for (int i = 0; i < m * n; ++i) CHECK(rel_err(got[i], want[i]) < 1e-5);
        }

        // gemm_nt against gemm with an explicitly transposed operand.
        std::vector<float> Btt(static_cast<size_t>(k * n));
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < k; ++c) Btt[c * n + r] = Bt[r * k + c];
        std::vector<float> via_nt(static_cast<size_t>(m * n), 0.0f);
        std::vector<float> via_n(static_cast<size_t>(m * n), 0.0f);
        s.gemm_nt(m, n, k, A.data(), Bt.data(), via_nt.data(), false);
        s.gemm(m, n, k, A.data(), Btt.data(), via_n.data(), false);
        for (int i = 0; i < m * n; ++i) CHECK(rel_err(via_nt[i], via_n[i]) < 1e-5);
    }
}

TEST_CASE("axpy matches across levels") {
    if (!simd_available()) return;
    const auto& s = kern::table_for(kern::Level::scalar);
    const auto& v = kern::table_for(simd_level());
    std::mt19937 rng(17);
    for (size_t n : {1u, 9u, 64u, 1000u}) {
        auto x = random_vec(n, rng);
        auto y = random_vec(n, rng);
        auto y2 = y;
        s.axpy(n, 0.37f, x.data(), y.data());
        v.axpy(n, 0.37f, x.data(), y2.data());
        for (size_t i = 0; i < n; ++i) CHECK(rel_err(y2[i], y[i]) < 1e-6);
    }
}

TEST_CASE("level selection is sticky and reversible") {
    const kern::Level before = kern::active_level();
    {
        LevelGuard g(kern::Level::scalar);
        CHECK(kern::active_level() == kern::Level::scalar);
        float out[4];
        const float a[4] = {1, 2, 3, 4}, b[4] = {5, 6, 7, 8};
        kern::vadd(4, a, b, out);
        CHECK(out[3] == 12.0f);
    }
    CHECK(kern::active_level() == before);
}
