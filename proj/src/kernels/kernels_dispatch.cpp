#include "unblur/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "unblur/thread_pool.hpp"

namespace unblur::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
#else
    return false;
#endif
}

const FloatOps& ops() {
    static const FloatOps* selected = [] {
        const char* env = std::getenv("UNBLUR_KERNELS");
        if (env && std::strcmp(env, "scalar") == 0) return &scalar_ops;
        if (env && std::strcmp(env, "avx2") == 0) return &avx2_ops;
        return avx2_supported() ? &avx2_ops : &scalar_ops;
    }();
    return *selected;
}

namespace {
// Below this many multiply-adds a parallel launch costs more than it saves.
constexpr std::size_t kParallelFlops = 1 << 18;

std::size_t row_grain(std::size_t rows, std::size_t flops_per_row) {
    std::size_t per_chunk = kParallelFlops / (flops_per_row + 1) + 1;
    return per_chunk < rows ? per_chunk : rows;
}
}  // namespace

void mm_nn(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    const auto& o = ops();
    std::size_t work = static_cast<std::size_t>(M) * N * K;
    if (work < kParallelFlops) {
        o.mm_nn(A, B, C, M, N, K, 0, M, acc);
        return;
    }
    parallel_for(static_cast<std::size_t>(M), row_grain(M, static_cast<std::size_t>(N) * K),
                 [&](std::size_t m0, std::size_t m1) {
                     o.mm_nn(A, B, C, M, N, K, static_cast<int>(m0), static_cast<int>(m1), acc);
                 });
}

void mm_nt(const float* A, const float* B, float* C, int M, int N, int K, bool acc, float alpha) {
    const auto& o = ops();
    std::size_t work = static_cast<std::size_t>(M) * N * K;
    if (work < kParallelFlops) {
        o.mm_nt(A, B, C, M, N, K, 0, M, acc, alpha);
        return;
    }
    parallel_for(static_cast<std::size_t>(M), row_grain(M, static_cast<std::size_t>(N) * K),
                 [&](std::size_t m0, std::size_t m1) {
                     o.mm_nt(A, B, C, M, N, K, static_cast<int>(m0), static_cast<int>(m1), acc, alpha);
                 });
}

void mm_tn(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    const auto& o = ops();
    std::size_t work = static_cast<std::size_t>(M) * N * K;
    if (work < kParallelFlops) {
        o.mm_tn(A, B, C, M, N, K, 0, K, acc);
        return;
    }
    parallel_for(static_cast<std::size_t>(K), row_grain(K, static_cast<std::size_t>(M) * N),
                 [&](std::size_t k0, std::size_t k1) {
                     o.mm_tn(A, B, C, M, N, K, static_cast<int>(k0), static_cast<int>(k1), acc);
                 });
}

}  // namespace unblur::kernels
