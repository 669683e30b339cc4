// SPDX-License-Identifier: Apache-2.0
#include "pano/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace pano::kern {

const Table& scalar_table();
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
const Table& avx2_table();
#endif
#if defined(__aarch64__) || defined(_M_ARM64)
const Table& neon_table();
#endif

bool level_supported(Level lvl) {
    switch (lvl) {
        case Level::scalar:
            return true;
        case Level::avx2:
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Level::neon:
#if defined(__aarch64__) || defined(_M_ARM64)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const char* level_name(Level lvl) {
    switch (lvl) {
        case Level::scalar: return "scalar";
        case Level::avx2: return "avx2";
        case Level::neon: return "neon";
    }
    return "?";
}

namespace {

Level detect_level() {
    if (const char* env = std::getenv("PANO_GIN_SIMD")) {
        const std::string s(env);
        Level want;
        if (s == "scalar") want = Level::scalar;
        else if (s == "avx2") want = Level::avx2;
        else if (s == "neon") want = Level::neon;
        else throw std::runtime_error("PANO_GIN_SIMD must be scalar, avx2 or neon (got '" + s + "')");
        if (!level_supported(want)) {
            throw std::runtime_error(std::string("PANO_GIN_SIMD requests unsupported level ") + level_name(want));
        }
        return want;
    }
    if (level_supported(Level::avx2)) return Level::avx2;
    if (level_supported(Level::neon)) return Level::neon;
    return Level::scalar;
}

struct Dispatch {
    Level level;
    const Table* table;
    Dispatch() : level(detect_level()), table(&table_for(level)) {}
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

const Table& table_for(Level lvl) {
    switch (lvl) {
        case Level::scalar:
            return scalar_table();
        case Level::avx2:
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
            if (level_supported(Level::avx2)) return avx2_table();
#endif
            break;
        case Level::neon:
#if defined(__aarch64__) || defined(_M_ARM64)
            return neon_table();
#else
            break;
#endif
    }
    throw std::runtime_error(std::string("kernel level not supported on this CPU: ") + level_name(lvl));
}

Level active_level() { return dispatch().level; }

void set_level(Level lvl) {
    Dispatch& d = dispatch();
    d.table = &table_for(lvl);
    d.level = lvl;
}

void gemm(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool acc) {
    dispatch().table->gemm(M, N, K, A, B, C, acc);
}
void gemm_nt(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool acc) {
    dispatch().table->gemm_nt(M, N, K, A, B, C, acc);
}
void axpy(i64 n, float a, const float* x, float* y) { dispatch().table->axpy(n, a, x, y); }
void vadd(i64 n, const float* a, const float* b, float* out) { dispatch().table->vadd(n, a, b, out); }
void vsub(i64 n, const float* a, const float* b, float* out) { dispatch().table->vsub(n, a, b, out); }
void vmul(i64 n, const float* a, const float* b, float* out) { dispatch().table->vmul(n, a, b, out); }
void vscale(i64 n, float a, const float* x, float* out) { dispatch().table->vscale(n, a, x, out); }
void vaddc(i64 n, const float* x, float c, float* out) { dispatch().table->vaddc(n, x, c, out); }
void vmaxc(i64 n, const float* x, float c, float* out) { dispatch().table->vmaxc(n, x, c, out); }
float dot(i64 n, const float* a, const float* b) { return dispatch().table->dot(n, a, b); }
float sum(i64 n, const float* x) { return dispatch().table->sum(n, x); }
float asum(i64 n, const float* x) { return dispatch().table->asum(n, x); }
void relu(i64 n, const float* x, float* out) { dispatch().table->relu(n, x, out); }
void lrelu(i64 n, const float* x, float slope, float* out) { dispatch().table->lrelu(n, x, slope, out); }

}  // namespace pano::kern
