#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace unblur {

// Fixed-size worker pool shared by the compute kernels. Work items get
// disjoint index ranges, so results do not depend on the worker count or
// on scheduling order; every accumulation happens inside one item.
class ThreadPool {
public:
    static ThreadPool& instance();

    int size() const { return n_workers_; }

    // Runs fn(begin, end) over [0, n) split into contiguous chunks.
    // Blocks until all chunks finish. Falls back to inline execution for
    // small n or when called from inside a pool worker.
    void parallel_for(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& fn);

private:
    ThreadPool();
    ~ThreadPool();
    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    struct Impl;
    Impl* impl_;
    int n_workers_;
};

inline void parallel_for(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& fn) {
    ThreadPool::instance().parallel_for(n, grain, fn);
}

}  // namespace unblur
