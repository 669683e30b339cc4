// SPDX-License-Identifier: Apache-2.0
#include "kernels_ref.hpp"

namespace pano::kern {

const Table& scalar_table() {
    static const Table t = {
        &ref::gemm<float>,  &ref::gemm_nt<float>, &ref::axpy<float>,  &ref::vadd<float>,
        &ref::vsub<float>,  &ref::vmul<float>,    &ref::vscale<float>, &ref::vaddc<float>,
        &ref::vmaxc<float>, &ref::dot<float>,     &ref::sum<float>,    &ref::asum<float>,
        &ref::relu<float>,  &ref::lrelu<float>,
    };
    return t;
}

// Double precision is always the scalar reference.
void gemm(i64 M, i64 N, i64 K, const double* A, const double* B, double* C, bool acc) {
    ref::gemm(M, N, K, A, B, C, acc);
}
void gemm_nt(i64 M, i64 N, i64 K, const double* A, const double* B, double* C, bool acc) {
    ref::gemm_nt(M, N, K, A, B, C, acc);
}
void axpy(i64 n, double a, const double* x, double* y) { ref::axpy(n, a, x, y); }
void vadd(i64 n, const double* a, const double* b, double* out) { ref::vadd(n, a, b, out); }
void vsub(i64 n, const double* a, const double* b, double* out) { ref::vsub(n, a, b, out); }
void vmul(i64 n, const double* a, const double* b, double* out) { ref::vmul(n, a, b, out); }
void vscale(i64 n, double a, const double* x, double* out) { ref::vscale(n, a, x, out); }
void vaddc(i64 n, const double* x, double c, double* out) { ref::vaddc(n, x, c, out); }
void vmaxc(i64 n, const double* x, double c, double* out) { ref::vmaxc(n, x, c, out); }
double dot(i64 n, const double* a, const double* b) { return ref::dot(n, a, b); }
double sum(i64 n, const double* x) { return ref::sum(n, x); }
double asum(i64 n, const double* x) { return ref::asum(n, x); }
void relu(i64 n, const double* x, double* out) { ref::relu(n, x, out); }
void lrelu(i64 n, const double* x, double slope, double* out) { ref::lrelu(n, x, slope, out); }

}  // namespace pano::kern
