#include "unblur/kernels.hpp"

#include <cmath>
#include <immintrin.h>

// AVX2+FMA variants of the float kernels. Tail elements fall through to
// scalar code; per-element accumulation order matches the reference (k runs
// sequentially), lanes only split the n dimension.

namespace unblur::kernels {

namespace {

void a_mm_nn(const float* A, const float* B, float* C, int M, int N, int K, int m0, int m1, bool acc) {
    (void)M;
    for (int m = m0; m < m1; ++m) {
        float* c = C + static_cast<std::size_t>(m) * N;
        if (!acc) {
            int n = 0;
            __m256 z = _mm256_setzero_ps();
            for (; n + 8 <= N; n += 8) _mm256_storeu_ps(c + n, z);
            for (; n < N; ++n) c[n] = 0.0f;
        }
        const float* a = A + static_cast<std::size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            float av = a[k];
            if (av == 0.0f) continue;
            const float* b = B + static_cast<std::size_t>(k) * N;
            __m256 va = _mm256_set1_ps(av);
            int n = 0;
            for (; n + 16 <= N; n += 16) {
                __m256 c0 = _mm256_loadu_ps(c + n);
                __m256 c1 = _mm256_loadu_ps(c + n + 8);
                c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + n), c0);
                c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + n + 8), c1);
                _mm256_storeu_ps(c + n, c0);
                _mm256_storeu_ps(c + n + 8, c1);
            }
            for (; n + 8 <= N; n += 8) {
                __m256 c0 = _mm256_loadu_ps(c + n);
                c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + n), c0);
                _mm256_storeu_ps(c + n, c0);
            }
            for (; n < N; ++n) c[n] += av * b[n];
        }
    }
}

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

void a_mm_nt(const float* A, const float* B, float* C, int M, int N, int K, int m0, int m1, bool acc, float alpha) {
    (void)M;
    for (int m = m0; m < m1; ++m) {
        const float* a = A + static_cast<std::size_t>(m) * K;
        float* c = C + static_cast<std::size_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const float* b = B + static_cast<std::size_t>(n) * K;
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            int k = 0;
            for (; k + 16 <= K; k += 16) {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc0);
                acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), acc1);
            }
            for (; k + 8 <= K; k += 8)
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc0);
            float s = hsum8(_mm256_add_ps(acc0, acc1));
            for (; k < K; ++k) s += a[k] * b[k];
            s *= alpha;
            c[n] = acc ? c[n] + s : s;
        }
    }
}

void a_mm_tn(const float* A, const float* B, float* C, int M, int N, int K, int k0, int k1, bool acc) {
    for (int k = k0; k < k1; ++k) {
        float* c = C + static_cast<std::size_t>(k) * N;
        if (!acc) {
            int n = 0;
            __m256 z = _mm256_setzero_ps();
            for (; n + 8 <= N; n += 8) _mm256_storeu_ps(c + n, z);
            for (; n < N; ++n) c[n] = 0.0f;
        }
        for (int m = 0; m < M; ++m) {
            float av = A[static_cast<std::size_t>(m) * K + k];
            if (av == 0.0f) continue;
            const float* b = B + static_cast<std::size_t>(m) * N;
            __m256 va = _mm256_set1_ps(av);
            int n = 0;
            for (; n + 8 <= N; n += 8) {
                __m256 c0 = _mm256_loadu_ps(c + n);
                c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + n), c0);
                _mm256_storeu_ps(c + n, c0);
            }
            for (; n < N; ++n) c[n] += av * b[n];
        }
    }
}

void a_vadd(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}
void a_vmul(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}
void a_axpy(float a, const float* x, float* y, std::size_t n) {
    __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}
void a_vscale(const float* x, float* y, float s, std::size_t n) {
    __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(vs, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = x[i] * s;
}
float a_reduce_sum(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}
float a_reduce_sumsq(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}
void a_adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
                 float lr, float beta1, float beta2, float eps, float wd,
                 float bias1, float bias2) {
    __m256 vb1 = _mm256_set1_ps(beta1), vb1c = _mm256_set1_ps(1.0f - beta1);
    __m256 vb2 = _mm256_set1_ps(beta2), vb2c = _mm256_set1_ps(1.0f - beta2);
    __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps), vwd = _mm256_set1_ps(wd);
    __m256 vib1 = _mm256_set1_ps(1.0f / bias1), vib2 = _mm256_set1_ps(1.0f / bias2);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 gi = _mm256_loadu_ps(g + i);
        __m256 mi = _mm256_fmadd_ps(vb1c, gi, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
        __m256 vi = _mm256_fmadd_ps(vb2c, _mm256_mul_ps(gi, gi), _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        __m256 mhat = _mm256_mul_ps(mi, vib1);
        __m256 vhat = _mm256_mul_ps(vi, vib2);
        __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        __m256 pi = _mm256_loadu_ps(p + i);
        __m256 upd = _mm256_fmadd_ps(vwd, pi, _mm256_div_ps(mhat, denom));
        _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(vlr, upd, pi));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        float mhat = m[i] / bias1;
        float vhat = v[i] / bias2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

}  // namespace

const FloatOps avx2_ops = {
    a_mm_nn, a_mm_nt, a_mm_tn, a_vadd, a_vmul, a_axpy, a_vscale,
    a_reduce_sum, a_reduce_sumsq, a_adam_step, "avx2",
};

}  // namespace unblur::kernels
