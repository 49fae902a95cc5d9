#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace madrop {

/// Runs fn(i) for i in [begin, end) across `workers` threads. Work items are
/// independent; callers keep determinism by writing results into
/// index-addressed slots rather than relying on completion order. The first
/// exception thrown by any item is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, int workers, Fn&& fn) {
    const std::int64_t count = end - begin;
    if (count <= 0) return;
    if (workers <= 1 || count == 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    const int n_threads = static_cast<int>(std::min<std::int64_t>(workers, count));
    std::atomic<std::int64_t> cursor{begin};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&]() {
            while (true) {
                const std::int64_t i = cursor.fetch_add(1);
                if (i >= end) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace madrop
