// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pano/kernels.hpp"

#include <algorithm>
#include <cmath>

// Scalar reference kernels. These define the semantics the SIMD variants are
// equivalence-tested against, and they back the double-precision path.

namespace pano::kern::ref {

template <typename T>
void gemm(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    for (i64 i = 0; i < M; ++i) {
        T* crow = C + i * N;
        if (!accumulate) {
            std::fill(crow, crow + N, T(0));
        }
        const T* arow = A + i * K;
        for (i64 k = 0; k < K; ++k) {
            const T a = arow[k];
            const T* brow = B + k * N;
            for (i64 j = 0; j < N; ++j) {
                crow[j] += a * brow[j];
            }
        }
    }
}

template <typename T>
void gemm_nt(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    for (i64 i = 0; i < M; ++i) {
        const T* arow = A + i * K;
        T* crow = C + i * N;
        for (i64 j = 0; j < N; ++j) {
            const T* brow = B + j * K;
            T acc = T(0);
            for (i64 k = 0; k < K; ++k) {
                acc += arow[k] * brow[k];
            }
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

template <typename T>
void axpy(i64 n, T a, const T* x, T* y) {
    for (i64 i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void vadd(i64 n, const T* a, const T* b, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void vsub(i64 n, const T* a, const T* b, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void vmul(i64 n, const T* a, const T* b, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void vscale(i64 n, T a, const T* x, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = a * x[i];
}

template <typename T>
void vaddc(i64 n, const T* x, T c, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = x[i] + c;
}

template <typename T>
void vmaxc(i64 n, const T* x, T c, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = x[i] > c ? x[i] : c;
}

template <typename T>
T dot(i64 n, const T* a, const T* b) {
    T acc = T(0);
    for (i64 i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T sum(i64 n, const T* x) {
    T acc = T(0);
    for (i64 i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
T asum(i64 n, const T* x) {
    T acc = T(0);
    for (i64 i = 0; i < n; ++i) acc += std::abs(x[i]);
    return acc;
}

template <typename T>
void relu(i64 n, const T* x, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void lrelu(i64 n, const T* x, T slope, T* out) {
    for (i64 i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

}  // namespace pano::kern::ref
