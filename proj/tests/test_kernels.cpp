#include <doctest.h>

#include <cmath>
#include <vector>

#include "unblur/kernels.hpp"
#include "unblur/rng.hpp"

using namespace unblur;

namespace {

std::vector<float> rand_vec(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace

TEST_CASE("kernel variants agree: gemm") {
    if (!kernels::avx2_supported()) {
        MESSAGE("avx2 not supported on this host, skipping variant comparison");
        return;
    }
    Rng rng(42);
    for (auto [M, N, K] : {std::tuple<int, int, int>{7, 9, 13}, {64, 64, 128}, {33, 257, 65}, {1, 130, 1}}) {
        auto A = rand_vec(std::size_t(M) * K, rng);
        auto B = rand_vec(std::size_t(K) * N, rng);
        auto Bt = rand_vec(std::size_t(N) * K, rng);
        std::vector<float> c0(std::size_t(M) * N, 0.5f), c1(std::size_t(M) * N, 0.5f);

        kernels::scalar_ops.mm_nn(A.data(), B.data(), c0.data(), M, N, K, 0, M, true);
        kernels::avx2_ops.mm_nn(A.data(), B.data(), c1.data(), M, N, K, 0, M, true);
        CHECK(max_abs_diff(c0, c1) < 1e-4 * K);

        kernels::scalar_ops.mm_nt(A.data(), Bt.data(), c0.data(), M, N, K, 0, M, false, 0.37f);
        kernels::avx2_ops.mm_nt(A.data(), Bt.data(), c1.data(), M, N, K, 0, M, false, 0.37f);
        CHECK(max_abs_diff(c0, c1) < 1e-4 * K);

        std::vector<float> d0(std::size_t(K) * N, -1.0f), d1(std::size_t(K) * N, -1.0f);
        kernels::scalar_ops.mm_tn(A.data(), B.data(), d0.data(), K == 1 ? M : M, N, K, 0, K, true);
        kernels::avx2_ops.mm_tn(A.data(), B.data(), d1.data(), M, N, K, 0, K, true);
        CHECK(max_abs_diff(d0, d1) < 1e-4 * M);
    }
}

TEST_CASE("kernel variants agree: elementwise and reductions") {
    if (!kernels::avx2_supported()) return;
    Rng rng(7);
    auto a = rand_vec(1031, rng);
    auto b = rand_vec(1031, rng);
    std::vector<float> y0(a.size()), y1(a.size());

    kernels::scalar_ops.vadd(a.data(), b.data(), y0.data(), a.size());
    kernels::avx2_ops.vadd(a.data(), b.data(), y1.data(), a.size());
    CHECK(max_abs_diff(y0, y1) == 0.0);

    kernels::scalar_ops.vmul(a.data(), b.data(), y0.data(), a.size());
    kernels::avx2_ops.vmul(a.data(), b.data(), y1.data(), a.size());
    CHECK(max_abs_diff(y0, y1) == 0.0);

    y0 = b;
    y1 = b;
    kernels::scalar_ops.axpy(0.77f, a.data(), y0.data(), a.size());
    kernels::avx2_ops.axpy(0.77f, a.data(), y1.data(), a.size());
    CHECK(max_abs_diff(y0, y1) < 1e-6);

    kernels::scalar_ops.vscale(a.data(), y0.data(), -1.3f, a.size());
    kernels::avx2_ops.vscale(a.data(), y1.data(), -1.3f, a.size());
    CHECK(max_abs_diff(y0, y1) == 0.0);

    CHECK(std::fabs(kernels::scalar_ops.reduce_sum(a.data(), a.size()) -
                    kernels::avx2_ops.reduce_sum(a.data(), a.size())) < 1e-3);
    CHECK(std::fabs(kernels::scalar_ops.reduce_sumsq(a.data(), a.size()) -
                    kernels::avx2_ops.reduce_sumsq(a.data(), a.size())) < 1e-3);
}

TEST_CASE("kernel variants agree: adam step") {
    if (!kernels::avx2_supported()) return;
    Rng rng(11);
    auto g = rand_vec(515, rng);
    auto p0 = rand_vec(515, rng);
    auto m0 = rand_vec(515, rng);
    auto v0 = rand_vec(515, rng);
    for (auto& x : v0) x = std::fabs(x);
    auto p1 = p0, m1 = m0, v1 = v0;

    kernels::scalar_ops.adam_step(p0.data(), m0.data(), v0.data(), g.data(), g.size(),
                                  5e-5f, 0.9f, 0.999f, 1e-8f, 0.01f, 0.1f, 0.001f);
    kernels::avx2_ops.adam_step(p1.data(), m1.data(), v1.data(), g.data(), g.size(),
                                5e-5f, 0.9f, 0.999f, 1e-8f, 0.01f, 0.1f, 0.001f);
    CHECK(max_abs_diff(p0, p1) < 1e-6);
    CHECK(max_abs_diff(m0, m1) < 1e-6);
    CHECK(max_abs_diff(v0, v1) < 1e-6);
}

TEST_CASE("threaded gemm wrapper matches single-thread kernel") {
    Rng rng(3);
    int M = 300, N = 96, K = 200;
    auto A = rand_vec(std::size_t(M) * K, rng);
    auto B = rand_vec(std::size_t(K) * N, rng);
    std::vector<float> c0(std::size_t(M) * N), c1(std::size_t(M) * N);
    kernels::ops().mm_nn(A.data(), B.data(), c0.data(), M, N, K, 0, M, false);
    kernels::mm_nn(A.data(), B.data(), c1.data(), M, N, K, false);
    CHECK(max_abs_diff(c0, c1) == 0.0);  // same kernel, threads only split rows
}
