#include "gemm.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <vector>

#if defined(__linux__)
#include <dlfcn.h>
#endif

namespace saliex::detail {
namespace {

// cblas enums, spelled out so no BLAS header is needed at build time.
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using cblas_dgemm_fn = void (*)(int order, int trans_a, int trans_b, int m, int n, int k,
                                double alpha, const double* a, int lda, const double* b, int ldb,
                                double beta, double* c, int ldc);
using set_threads_fn = void (*)(int);

cblas_dgemm_fn g_blas_dgemm = nullptr;
std::once_flag g_init_flag;

void load_blas() {
#if defined(__linux__)
    // OpenBLAS picks its kernel from CPUID at load time. On virtualized hosts
    // that mask the CPU model it can fall back to a generic (very slow)
    // kernel, so when the CPU reports AVX-512 we pin the core type before the
    // library initializes. An existing OPENBLAS_CORETYPE setting wins.
#if defined(__x86_64__)
    if (!std::getenv("OPENBLAS_CORETYPE") && __builtin_cpu_supports("avx512f") &&
        __builtin_cpu_supports("avx512dq") && __builtin_cpu_supports("avx512vl")) {
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
    }
#endif
    void* handle = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!handle) handle = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (!handle) return;
    auto dgemm_sym = reinterpret_cast<cblas_dgemm_fn>(dlsym(handle, "cblas_dgemm"));
    if (!dgemm_sym) return;
    // Single-threaded BLAS: callers parallelize at a higher level and expect
    // bit-identical results from concurrent invocations.
    if (auto set_threads =
            reinterpret_cast<set_threads_fn>(dlsym(handle, "openblas_set_num_threads"))) {
        set_threads(1);
    }
    g_blas_dgemm = dgemm_sym;
#endif
}

// Fallback kernel: blocked over k so panels of B stay cache-resident.
void dgemm_fallback(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                    const double* a, int lda, const double* b, int ldb, double beta, double* c,
                    int ldc) {
    auto a_at = [&](int i, int p) { return trans_a ? a[(std::size_t)p * lda + i]
                                                   : a[(std::size_t)i * lda + p]; };
    auto b_at = [&](int p, int j) { return trans_b ? b[(std::size_t)j * ldb + p]
                                                   : b[(std::size_t)p * ldb + j]; };
    for (int i = 0; i < m; ++i) {
        double* crow = c + (std::size_t)i * ldc;
        if (beta == 0.0) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0;
        } else if (beta != 1.0) {
            for (int j = 0; j < n; ++j) crow[j] *= beta;
        }
    }
    constexpr int kBlock = 64;
    for (int p0 = 0; p0 < k; p0 += kBlock) {
        int p1 = std::min(k, p0 + kBlock);
        for (int i = 0; i < m; ++i) {
            double* crow = c + (std::size_t)i * ldc;
            for (int p = p0; p < p1; ++p) {
                double av = alpha * a_at(i, p);
                if (av == 0.0) continue;
                if (!trans_b) {
                    const double* brow = b + (std::size_t)p * ldb;
                    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
                } else {
                    for (int j = 0; j < n; ++j) crow[j] += av * b_at(p, j);
                }
            }
        }
    }
}

}  // namespace

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
           int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    std::call_once(g_init_flag, load_blas);
    if (g_blas_dgemm) {
        g_blas_dgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans, m, n, k,
                     alpha, a, lda, b, ldb, beta, c, ldc);
    } else {
        dgemm_fallback(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }
}

bool gemm_uses_blas() {
    std::call_once(g_init_flag, load_blas);
    return g_blas_dgemm != nullptr;
}

}  // namespace saliex::detail
