#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace flawsim {

/// Runs fn(i) for i in [0, count) on up to nthreads workers. Tasks must not
/// share mutable state; results should be written into preallocated slots so
/// reductions can fold them in a fixed order afterwards. The first exception
/// thrown by any task is rethrown on the calling thread.
inline void parallel_for(std::size_t count, int nthreads, const std::function<void(std::size_t)>& fn) {
    if (nthreads < 1) nthreads = 1;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(nthreads), count ? count : 1);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= count) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace flawsim
