#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace bartsel {

inline std::size_t default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs fn(0..n_tasks-1) over a small worker pool. Tasks must be independent;
// results keyed by task index stay deterministic whatever the schedule.
inline void parallel_for(std::size_t n_tasks, std::size_t n_workers,
                         const std::function<void(std::size_t)>& fn) {
    if (n_workers == 0) n_workers = 1;
    if (n_workers == 1 || n_tasks <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    const std::size_t spawn = std::min(n_workers, n_tasks);
    threads.reserve(spawn);
    for (std::size_t w = 0; w < spawn; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace bartsel
