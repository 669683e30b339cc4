// SPDX-License-Identifier: Apache-2.0
//
// NEON kernel variants for aarch64 builds.

#include "pano/kernels.hpp"

#if defined(__aarch64__) || defined(_M_ARM64)

#include <arm_neon.h>

#include <algorithm>
#include <cmath>

namespace pano::kern::neon_impl {

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
            const float32x4_t va = vdupq_n_f32(a);
            i64 j = 0;
            for (; j + 8 <= N; j += 8) {
                float32x4_t c0 = vld1q_f32(crow + j);
                float32x4_t c1 = vld1q_f32(crow + j + 4);
                c0 = vfmaq_f32(c0, va, vld1q_f32(brow + j));
                c1 = vfmaq_f32(c1, va, vld1q_f32(brow + j + 4));
                vst1q_f32(crow + j, c0);
                vst1q_f32(crow + j + 4, c1);
            }
            for (; j + 4 <= N; j += 4) {
                float32x4_t c0 = vld1q_f32(crow + j);
                c0 = vfmaq_f32(c0, va, vld1q_f32(brow + j));
                vst1q_f32(crow + j, c0);
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
            float32x4_t acc0 = vdupq_n_f32(0.0f);
            float32x4_t acc1 = vdupq_n_f32(0.0f);
            i64 k = 0;
            for (; k + 8 <= K; k += 8) {
                acc0 = vfmaq_f32(acc0, vld1q_f32(arow + k), vld1q_f32(brow + k));
                acc1 = vfmaq_f32(acc1, vld1q_f32(arow + k + 4), vld1q_f32(brow + k + 4));
            }
            for (; k + 4 <= K; k += 4) {
                acc0 = vfmaq_f32(acc0, vld1q_f32(arow + k), vld1q_f32(brow + k));
            }
            float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
            for (; k < K; ++k) {
                acc += arow[k] * brow[k];
            }
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void axpy(i64 n, float a, const float* x, float* y) {
    const float32x4_t va = vdupq_n_f32(a);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void vadd(i64 n, const float* a, const float* b, float* out) {
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub(i64 n, const float* a, const float* b, float* out) {
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul(i64 n, const float* a, const float* b, float* out) {
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale(i64 n, float a, const float* x, float* out) {
    const float32x4_t va = vdupq_n_f32(a);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vmulq_f32(va, vld1q_f32(x + i)));
    }
    for (; i < n; ++i) out[i] = a * x[i];
}

void vaddc(i64 n, const float* x, float c, float* out) {
    const float32x4_t vc = vdupq_n_f32(c);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vaddq_f32(vld1q_f32(x + i), vc));
    }
    for (; i < n; ++i) out[i] = x[i] + c;
}

void vmaxc(i64 n, const float* x, float c, float* out) {
    const float32x4_t vc = vdupq_n_f32(c);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vmaxq_f32(vld1q_f32(x + i), vc));
    }
    for (; i < n; ++i) out[i] = x[i] > c ? x[i] : c;
}

float dot(i64 n, const float* a, const float* b) {
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    i64 i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
        acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    }
    float s = vaddvq_f32(vaddq_f32(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float sum(i64 n, const float* x) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = vaddq_f32(acc, vld1q_f32(x + i));
    }
    float s = vaddvq_f32(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float asum(i64 n, const float* x) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = vaddq_f32(acc, vabsq_f32(vld1q_f32(x + i)));
    }
    float s = vaddvq_f32(acc);
    for (; i < n; ++i) s += std::abs(x[i]);
    return s;
}

void relu(i64 n, const float* x, float* out) {
    const float32x4_t z = vdupq_n_f32(0.0f);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vmaxq_f32(vld1q_f32(x + i), z));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void lrelu(i64 n, const float* x, float slope, float* out) {
    const float32x4_t z = vdupq_n_f32(0.0f);
    const float32x4_t vs = vdupq_n_f32(slope);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t v = vld1q_f32(x + i);
        const float32x4_t neg = vmulq_f32(vs, v);
        const uint32x4_t mask = vcgtq_f32(v, z);
        vst1q_f32(out + i, vbslq_f32(mask, v, neg));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

}  // namespace pano::kern::neon_impl

namespace pano::kern {

const Table& neon_table() {
    static const Table t = {
        &neon_impl::gemm,  &neon_impl::gemm_nt, &neon_impl::axpy,  &neon_impl::vadd,
        &neon_impl::vsub,  &neon_impl::vmul,    &neon_impl::vscale, &neon_impl::vaddc,
        &neon_impl::vmaxc, &neon_impl::dot,     &neon_impl::sum,    &neon_impl::asum,
        &neon_impl::relu,  &neon_impl::lrelu,
    };
    return t;
}

}  // namespace pano::kern

#endif  // aarch64
