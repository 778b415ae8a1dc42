#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ltm {

// Worker count: LTM_THREADS overrides hardware_concurrency. Fixed for the
// lifetime of the process; recorded in run manifests for reproducibility.
inline int thread_count() {
    static int n = [] {
        if (const char* env = std::getenv("LTM_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

namespace detail {

inline thread_local bool tl_in_pool_worker = false;

// Persistent pool running one static range partition per dispatch. Nested
// parallel_for calls from inside a worker run inline on the caller.
class ThreadPool {
  public:
    static ThreadPool& instance() {
        static ThreadPool pool(thread_count());
        return pool;
    }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
        if (n <= 0) return;
        int workers = static_cast<int>(threads_.size()) + 1;
        if (n == 1 || workers == 1 || tl_in_pool_worker) {
            body(0, n);
            return;
        }
        std::unique_lock lock(dispatch_mutex_);
        body_ = &body;
        total_ = n;
        shards_ = std::min<int64_t>(workers, n);
        pending_.store(static_cast<int>(shards_), std::memory_order_relaxed);
        generation_.fetch_add(1, std::memory_order_release);
        {
            std::lock_guard lg(mutex_);
            cv_.notify_all();
        }
        // The dispatching thread takes shard 0.
        run_shard(0);
        std::unique_lock done_lock(mutex_);
        done_cv_.wait(done_lock, [&] { return pending_.load(std::memory_order_acquire) == 0; });
        body_ = nullptr;
    }

  private:
    explicit ThreadPool(int workers) {
        for (int i = 1; i < workers; ++i)
            threads_.emplace_back([this, i] { worker_loop(i); });
    }

    ~ThreadPool() {
        stop_.store(true);
        {
            std::lock_guard lg(mutex_);
            cv_.notify_all();
        }
        for (auto& t : threads_) t.join();
    }

    void run_shard(int shard) {
        if (shard >= shards_) return;
        int64_t chunk = (total_ + shards_ - 1) / shards_;
        int64_t lo = shard * chunk;
        int64_t hi = std::min<int64_t>(total_, lo + chunk);
        if (lo < hi) (*body_)(lo, hi);
        if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
            std::lock_guard lg(mutex_);
            done_cv_.notify_all();
        }
    }

    void worker_loop(int shard) {
        tl_in_pool_worker = true;
        uint64_t seen = 0;
        while (true) {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] {
                return stop_.load() || generation_.load(std::memory_order_acquire) != seen;
            });
            if (stop_.load()) return;
            seen = generation_.load(std::memory_order_acquire);
            lock.unlock();
            run_shard(shard);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::mutex dispatch_mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::atomic<bool> stop_{false};
    std::atomic<uint64_t> generation_{0};
    std::atomic<int> pending_{0};
    const std::function<void(int64_t, int64_t)>* body_ = nullptr;
    int64_t total_ = 0;
    int64_t shards_ = 0;
};

}  // namespace detail

// Static contiguous partition of [0, n) across the pool; fn(begin, end) per
// shard. Writes to disjoint slots need no synchronization, and shard
// boundaries depend only on (n, thread_count), keeping runs reproducible.
template <class F>
void parallel_for_ranges(int64_t n, F&& fn) {
    std::function<void(int64_t, int64_t)> body = std::forward<F>(fn);
    detail::ThreadPool::instance().run(n, body);
}

// Per-index variant.
template <class F>
void parallel_for(int64_t n, F&& fn) {
    parallel_for_ranges(n, [&fn](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) fn(i);
    });
}

}  // namespace ltm
