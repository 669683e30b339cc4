// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86 targets and must only be entered after the runtime
// CPU check in kernels.cpp.

#include "pano/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace pano::kern::avx2 {

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
    return _mm_cvtss_f32(s);
}

}  // namespace

void gemm(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool accumulate) {
    for (i64 i = 0; i < M; ++i) {
        float* crow = C + i * N;
        if (!accumulate) {
            std::fill(crow, crow + N, 0.0f);
        }
        const float* arow = A + i * K;
        for (i64 k = 0; k < K; ++k) {
            const float a = arow[k];
            const float* brow = B + k * N;
            const __m256 va = _mm256_set1_ps(a);
            i64 j = 0;
            for (; j + 16 <= N; j += 16) {
                __m256 c0 = _mm256_loadu_ps(crow + j);
                __m256 c1 = _mm256_loadu_ps(crow + j + 8);
                c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
                c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j + 8), c1);
                _mm256_storeu_ps(crow + j, c0);
                _mm256_storeu_ps(crow + j + 8, c1);
            }
            for (; j + 8 <= N; j += 8) {
                __m256 c0 = _mm256_loadu_ps(crow + j);
                c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
                _mm256_storeu_ps(crow + j, c0);
            }
            for (; j < N; ++j) {
                crow[j] += a * brow[j];
            }
        }
    }
}

void gemm_nt(i64 M, i64 N, i64 K, const float* A, const float* B, float* C, bool accumulate) {
    for (i64 i = 0; i < M; ++i) {
        const float* arow = A + i * K;
        float* crow = C + i * N;
        for (i64 j = 0; j < N; ++j) {
            const float* brow = B + j * K;
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            i64 k = 0;
            for (; k + 16 <= K; k += 16) {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + k), _mm256_loadu_ps(brow + k), acc0);
                acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + k + 8), _mm256_loadu_ps(brow + k + 8), acc1);
            }
            for (; k + 8 <= K; k += 8) {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + k), _mm256_loadu_ps(brow + k), acc0);
            }
            float acc = hsum8(_mm256_add_ps(acc0, acc1));
            for (; k < K; ++k) {
                acc += arow[k] * brow[k];
            }
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void axpy(i64 n, float a, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(a);
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void vadd(i64 n, const float* a, const float* b, float* out) {
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub(i64 n, const float* a, const float* b, float* out) {
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul(i64 n, const float* a, const float* b, float* out) {
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale(i64 n, float a, const float* x, float* out) {
    const __m256 va = _mm256_set1_ps(a);
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) out[i] = a * x[i];
}

void vaddc(i64 n, const float* x, float c, float* out) {
    const __m256 vc = _mm256_set1_ps(c);
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), vc));
    }
    for (; i < n; ++i) out[i] = x[i] + c;
}

void vmaxc(i64 n, const float* x, float c, float* out) {
    const __m256 vc = _mm256_set1_ps(c);
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), vc));
    }
    for (; i < n; ++i) out[i] = x[i] > c ? x[i] : c;
}

float dot(i64 n, const float* a, const float* b) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    i64 i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    }
    float s = hsum8(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float sum(i64 n, const float* x) {
    __m256 acc = _mm256_setzero_ps();
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    }
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float asum(i64 n, const float* x) {
    const __m256 signmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
    __m256 acc = _mm256_setzero_ps();
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_add_ps(acc, _mm256_and_ps(signmask, _mm256_loadu_ps(x + i)));
    }
    float s = hsum8(acc);
    for (; i < n; ++i) s += std::abs(x[i]);
    return s;
}

void relu(i64 n, const float* x, float* out) {
    const __m256 z = _mm256_setzero_ps();
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void lrelu(i64 n, const float* x, float slope, float* out) {
    const __m256 z = _mm256_setzero_ps();
    const __m256 vs = _mm256_set1_ps(slope);
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        const __m256 neg = _mm256_mul_ps(vs, v);
        const __m256 mask = _mm256_cmp_ps(v, z, _CMP_GT_OQ);
        _mm256_storeu_ps(out + i, _mm256_blendv_ps(neg, v, mask));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

}  // namespace pano::kern::avx2

namespace pano::kern {

const Table& avx2_table() {
    static const Table t = {
        &avx2::gemm,  &avx2::gemm_nt, &avx2::axpy,  &avx2::vadd, &avx2::vsub,
        &avx2::vmul,  &avx2::vscale,  &avx2::vaddc, &avx2::vmaxc, &avx2::dot,
        &avx2::sum,   &avx2::asum,    &avx2::relu,  &avx2::lrelu,
    };
    return t;
}

}  // namespace pano::kern

#endif  // x86
