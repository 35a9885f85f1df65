#include "spikefuse/threads.hpp"

#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace spikefuse {

void keep_freed_memory() {
#if defined(__GLIBC__)
    // Never satisfy allocations with mmap (so frees keep the pages), and
    // never trim the heap back to the kernel.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

std::size_t worker_count() {
    static const std::size_t n = [] {
        std::size_t hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        if (const char* env = std::getenv("SPIKEFUSE_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) hw = static_cast<std::size_t>(v);
        }
        return hw;
    }();
    return n;
}

namespace {

// Set while a thread is executing inside a parallel region; nested
// parallel_for calls then run serially instead of re-entering the pool.
thread_local bool g_in_parallel = false;

// Static fork-join pool. Each invocation statically partitions [0,n) into
// one contiguous range per participant; the calling thread runs range 0 and
// waits for the others to acknowledge. Ranges never overlap and no state is
// mutated until every acknowledgment arrives.
class Pool {
public:
    Pool() : nthreads_(worker_count()) {
        for (std::size_t i = 1; i < nthreads_; ++i)
            threads_.emplace_back([this, i] { worker(i); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        const std::size_t parts = std::min(n, nthreads_);
        if (parts <= 1 || g_in_parallel) {
            fn(0, n);
            return;
        }
        {
            std::lock_guard<std::mutex> lk(m_);
            fn_ = &fn;
            total_ = n;
            parts_ = parts;
            acks_ = 0;
            generation_++;
        }
        cv_.notify_all();
        auto [b0, e0] = range(0, n, parts);
        g_in_parallel = true;
        fn(b0, e0);
        g_in_parallel = false;
        std::unique_lock<std::mutex> lk(m_);
        done_cv_.wait(lk, [this] { return acks_ == parts_ - 1; });
        fn_ = nullptr;
    }

private:
    static std::pair<std::size_t, std::size_t> range(std::size_t i, std::size_t n,
                                                     std::size_t parts) {
        const std::size_t chunk = n / parts, rem = n % parts;
        const std::size_t begin = i * chunk + std::min<std::size_t>(i, rem);
        return {begin, begin + chunk + (i < rem ? 1 : 0)};
    }

    void worker(std::size_t index) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
            std::size_t n = 0, parts = 0;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                fn = fn_;
                n = total_;
                parts = parts_;
            }
            if (index < parts) {
                auto [b, e] = range(index, n, parts);
                g_in_parallel = true;
                (*fn)(b, e);
                g_in_parallel = false;
                std::lock_guard<std::mutex> lk(m_);
                if (++acks_ == parts_ - 1) done_cv_.notify_all();
            }
        }
    }

    const std::size_t nthreads_;
    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
    std::size_t total_ = 0;
    std::size_t parts_ = 0;
    std::size_t acks_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    static Pool pool;
    pool.run(n, fn);
}

}  // namespace spikefuse
