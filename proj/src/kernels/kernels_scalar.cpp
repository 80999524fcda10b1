#include "unblur/kernels.hpp"

#include <cmath>

namespace unblur::kernels {

namespace {

void s_mm_nn(const float* A, const float* B, float* C, int M, int N, int K, int m0, int m1, bool acc) {
    ref_mm_nn(A, B, C, M, N, K, m0, m1, acc);
}
void s_mm_nt(const float* A, const float* B, float* C, int M, int N, int K, int m0, int m1, bool acc, float alpha) {
    ref_mm_nt(A, B, C, M, N, K, m0, m1, acc, alpha);
}
void s_mm_tn(const float* A, const float* B, float* C, int M, int N, int K, int k0, int k1, bool acc) {
    ref_mm_tn(A, B, C, M, N, K, k0, k1, acc);
}

void s_vadd(const float* a, const float* b, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
void s_vmul(const float* a, const float* b, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
void s_axpy(float a, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
void s_vscale(const float* x, float* y, float s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * s;
}
float s_reduce_sum(const float* x, std::size_t n) {
    float s = 0.0f;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}
float s_reduce_sumsq(const float* x, std::size_t n) {
    float s = 0.0f;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}
void s_adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
                 float lr, float beta1, float beta2, float eps, float wd,
                 float bias1, float bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        float mhat = m[i] / bias1;
        float vhat = v[i] / bias2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

}  // namespace

const FloatOps scalar_ops = {
    s_mm_nn, s_mm_nt, s_mm_tn, s_vadd, s_vmul, s_axpy, s_vscale,
    s_reduce_sum, s_reduce_sumsq, s_adam_step, "scalar",
};

}  // namespace unblur::kernels
