#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace unblur::kernels {

// ---------------------------------------------------------------------------
// Inner-loop kernels. Hot float32 paths have an AVX2 variant selected once at
// startup; double precision (used by the gradient-check oracle) always runs
// the scalar reference. Every output element accumulates in a fixed order
// inside one work item, so results are reproducible for any thread count.
// ---------------------------------------------------------------------------

// Row-range GEMM kernels, row-major, contiguous.
//   mm_nn: C[m,n] (+)= sum_k A[m,k] * B[k,n]        rows m0..m1 of C
//   mm_nt: C[m,n] (+)= alpha * dot(A[m,:], B[n,:])  rows m0..m1 of C, B is [N,K]
//   mm_tn: C[k,n] (+)= sum_m A[m,k] * B[m,n]        rows k0..k1 of C, A is [M,K]
struct FloatOps {
    void (*mm_nn)(const float* A, const float* B, float* C, int M, int N, int K, int m0, int m1, bool acc);
    void (*mm_nt)(const float* A, const float* B, float* C, int M, int N, int K, int m0, int m1, bool acc, float alpha);
    void (*mm_tn)(const float* A, const float* B, float* C, int M, int N, int K, int k0, int k1, bool acc);
    void (*vadd)(const float* a, const float* b, float* y, std::size_t n);
    void (*vmul)(const float* a, const float* b, float* y, std::size_t n);
    void (*axpy)(float a, const float* x, float* y, std::size_t n);  // y += a*x
    void (*vscale)(const float* x, float* y, float s, std::size_t n);
    float (*reduce_sum)(const float* x, std::size_t n);
    float (*reduce_sumsq)(const float* x, std::size_t n);
    void (*adam_step)(float* p, float* m, float* v, const float* g, std::size_t n,
                      float lr, float beta1, float beta2, float eps, float wd,
                      float bias1, float bias2);  // bias* = 1 - beta*^t
    const char* name;
};

extern const FloatOps scalar_ops;
extern const FloatOps avx2_ops;

bool avx2_supported();
// Active table: avx2 when supported, scalar otherwise. UNBLUR_KERNELS=scalar
// (or =avx2) in the environment forces a variant.
const FloatOps& ops();

// Threaded full-matrix wrappers used by the tensor layer.
void mm_nn(const float* A, const float* B, float* C, int M, int N, int K, bool acc);
void mm_nt(const float* A, const float* B, float* C, int M, int N, int K, bool acc, float alpha);
void mm_tn(const float* A, const float* B, float* C, int M, int N, int K, bool acc);

// ---------------------------------------------------------------------------
// Scalar reference, any element type. The float instantiation is also the
// baseline the AVX2 variants are equivalence-tested against.
// ---------------------------------------------------------------------------

template <typename T>
inline void ref_mm_nn(const T* A, const T* B, T* C, int M, int N, int K, int m0, int m1, bool acc) {
    (void)M;
    for (int m = m0; m < m1; ++m) {
        T* c = C + static_cast<std::size_t>(m) * N;
        if (!acc)
            for (int n = 0; n < N; ++n) c[n] = T(0);
        const T* a = A + static_cast<std::size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            T av = a[k];
            if (av == T(0)) continue;
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

template <typename T>
inline void ref_mm_nt(const T* A, const T* B, T* C, int M, int N, int K, int m0, int m1, bool acc, T alpha) {
    (void)M;
    for (int m = m0; m < m1; ++m) {
        const T* a = A + static_cast<std::size_t>(m) * K;
        T* c = C + static_cast<std::size_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const T* b = B + static_cast<std::size_t>(n) * K;
            T s = T(0);
            for (int k = 0; k < K; ++k) s += a[k] * b[k];
            s *= alpha;
            c[n] = acc ? c[n] + s : s;
        }
    }
}

template <typename T>
inline void ref_mm_tn(const T* A, const T* B, T* C, int M, int N, int K, int k0, int k1, bool acc) {
    for (int k = k0; k < k1; ++k) {
        T* c = C + static_cast<std::size_t>(k) * N;
        if (!acc)
            for (int n = 0; n < N; ++n) c[n] = T(0);
        for (int m = 0; m < M; ++m) {
            T av = A[static_cast<std::size_t>(m) * K + k];
            if (av == T(0)) continue;
            const T* b = B + static_cast<std::size_t>(m) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// Type-generic entry points. float routes through the dispatch table (and the
// thread pool); other types take the scalar reference inline.
template <typename T>
inline void gemm_nn(const T* A, const T* B, T* C, int M, int N, int K, bool acc) {
    ref_mm_nn(A, B, C, M, N, K, 0, M, acc);
}
template <>
inline void gemm_nn<float>(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    mm_nn(A, B, C, M, N, K, acc);
}

template <typename T>
inline void gemm_nt(const T* A, const T* B, T* C, int M, int N, int K, bool acc, T alpha) {
    ref_mm_nt(A, B, C, M, N, K, 0, M, acc, alpha);
}
template <>
inline void gemm_nt<float>(const float* A, const float* B, float* C, int M, int N, int K, bool acc, float alpha) {
    mm_nt(A, B, C, M, N, K, acc, alpha);
}

template <typename T>
inline void gemm_tn(const T* A, const T* B, T* C, int M, int N, int K, bool acc) {
    ref_mm_tn(A, B, C, M, N, K, 0, K, acc);
}
template <>
inline void gemm_tn<float>(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    mm_tn(A, B, C, M, N, K, acc);
}

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

}  // namespace unblur::kernels
