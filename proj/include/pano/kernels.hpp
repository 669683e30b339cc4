// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

// Low-level numeric kernels behind the tensor ops.
//
// Float entry points route through a dispatch table selected at runtime
// (scalar reference, AVX2, or NEON depending on the host CPU). Double entry
// points always run the scalar reference path; it exists for the
// high-precision gradient checks, not for training.
//
// The environment variable PANO_GIN_SIMD (scalar|avx2|neon) overrides the
// detected level, and set_level() does the same programmatically. Every
// variant of a kernel computes the same per-element arithmetic order, so
// results across levels differ only by FMA/reassociation rounding.

namespace pano::kern {

using i64 = std::int64_t;

enum class Level { scalar = 0, avx2 = 1, neon = 2 };

bool level_supported(Level lvl);
Level active_level();
void set_level(Level lvl);
const char* level_name(Level lvl);

struct Table {
    // C[M x N] (+)= A[M x K] * B[K x N], row-major contiguous.
    void (*gemm)(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool accumulate);
    // C[M x N] (+)= A[M x K] * B^T, with B stored row-major as [N x K].
    void (*gemm_nt)(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool accumulate);
    void (*axpy)(i64 n, float a, const float* x, float* y);
    void (*vadd)(i64 n, const float* a, const float* b, float* out);
    void (*vsub)(i64 n, const float* a, const float* b, float* out);
    void (*vmul)(i64 n, const float* a, const float* b, float* out);
    void (*vscale)(i64 n, float a, const float* x, float* out);
    void (*vaddc)(i64 n, const float* x, float c, float* out);
    void (*vmaxc)(i64 n, const float* x, float c, float* out);
    float (*dot)(i64 n, const float* a, const float* b);
    float (*sum)(i64 n, const float* x);
    float (*asum)(i64 n, const float* x);
    void (*relu)(i64 n, const float* x, float* out);
    void (*lrelu)(i64 n, const float* x, float slope, float* out);
};

const Table& table_for(Level lvl);

// --- float API (dispatched) ---
void gemm(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool accumulate);
void gemm_nt(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool accumulate);
void axpy(i64 n, float a, const float* x, float* y);
void vadd(i64 n, const float* a, const float* b, float* out);
void vsub(i64 n, const float* a, const float* b, float* out);
void vmul(i64 n, const float* a, const float* b, float* out);
void vscale(i64 n, float a, const float* x, float* out);
void vaddc(i64 n, const float* x, float c, float* out);
void vmaxc(i64 n, const float* x, float c, float* out);
float dot(i64 n, const float* a, const float* b);
float sum(i64 n, const float* x);
float asum(i64 n, const float* x);
void relu(i64 n, const float* x, float* out);
void lrelu(i64 n, const float* x, float slope, float* out);

// --- double API (scalar reference only) ---
void gemm(i64 M, i64 N, i64 K, const double* A, const double* B, double* C, bool accumulate);
void gemm_nt(i64 M, i64 N, i64 K, const double* A, const double* B, double* C, bool accumulate);
void axpy(i64 n, double a, const double* x, double* y);
void vadd(i64 n, const double* a, const double* b, double* out);
void vsub(i64 n, const double* a, const double* b, double* out);
void vmul(i64 n, const double* a, const double* b, double* out);
void vscale(i64 n, double a, const double* x, double* out);
void vaddc(i64 n, const double* x, double c, double* out);
void vmaxc(i64 n, const double* x, double c, double* out);
double dot(i64 n, const double* a, const double* b);
double sum(i64 n, const double* x);
double asum(i64 n, const double* x);
void relu(i64 n, const double* x, double* out);
void lrelu(i64 n, const double* x, double slope, double* out);

}  // namespace pano::kern
