#include "unblur/thread_pool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace unblur {

struct ThreadPool::Impl {
    std::vector<std::thread> workers;
    std::mutex mu;
    std::condition_variable cv_work;
    std::condition_variable cv_done;
    const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
    std::size_t total = 0;
    std::size_t chunk = 0;
    std::atomic<std::size_t> next{0};
    std::atomic<int> active{0};
    std::uint64_t generation = 0;
    bool stop = false;

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu);
                cv_work.wait(lk, [&] { return stop || generation != seen; });
                if (stop) return;
                seen = generation;
            }
            run_chunks();
            if (active.fetch_sub(1) == 1) {
                std::lock_guard<std::mutex> lk(mu);
                cv_done.notify_all();
            }
        }
    }

    void run_chunks() {
        for (;;) {
            std::size_t begin = next.fetch_add(chunk);
            if (begin >= total) return;
            std::size_t end = begin + chunk;
            if (end > total) end = total;
            (*fn)(begin, end);
        }
    }
};

ThreadPool& ThreadPool::instance() {
    static ThreadPool pool;
    return pool;
}

ThreadPool::ThreadPool() : impl_(new Impl) {
    unsigned n = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("UNBLUR_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) n = static_cast<unsigned>(v);
    }
    if (n == 0) n = 1;
    n_workers_ = static_cast<int>(n);
    for (int i = 0; i + 1 < n_workers_; ++i)
        impl_->workers.emplace_back([this] { impl_->worker_loop(); });
}

ThreadPool::~ThreadPool() {
    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        impl_->stop = true;
        impl_->cv_work.notify_all();
    }
    for (auto& w : impl_->workers) w.join();
    delete impl_;
}

void ThreadPool::parallel_for(std::size_t n, std::size_t grain,
                              const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (grain == 0) grain = 1;
    if (n_workers_ == 1 || n <= grain) {
        fn(0, n);
        return;
    }
    static thread_local bool inside_pool = false;
    if (inside_pool) {  // no nested parallelism
        fn(0, n);
        return;
    }

    std::size_t chunks = (n + grain - 1) / grain;
    std::size_t max_chunks = static_cast<std::size_t>(n_workers_) * 4;
    if (chunks > max_chunks) {
        grain = (n + max_chunks - 1) / max_chunks;
    }

    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        impl_->fn = &fn;
        impl_->total = n;
        impl_->chunk = grain;
        impl_->next.store(0);
        impl_->active.store(static_cast<int>(impl_->workers.size()));
        ++impl_->generation;
        impl_->cv_work.notify_all();
    }

    inside_pool = true;
    impl_->run_chunks();
    inside_pool = false;

    std::unique_lock<std::mutex> lk(impl_->mu);
    impl_->cv_done.wait(lk, [&] { return impl_->active.load() == 0; });
    impl_->fn = nullptr;
}

}  // namespace unblur
