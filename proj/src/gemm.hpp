#pragma once

// Internal double-precision GEMM used by the convolution kernels.
// Row-major: C(MxN) = alpha * op(A) * op(B) + beta * C.

namespace saliex::detail {

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
           int lda, const double* b, int ldb, double beta, double* c, int ldc);

// True when an external BLAS was found; false means the built-in kernel is in use.
bool gemm_uses_blas();

}  // namespace saliex::detail
