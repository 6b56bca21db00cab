#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace qse {

// Resolves the worker count: explicit request > QSE_THREADS env > hardware.
std::size_t resolve_threads(std::size_t requested);

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results are identical for any worker count. Exceptions are captured and the
// first one (by index) is rethrown after all workers join.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n == 0 ? 1 : n));
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::pair<std::size_t, std::exception_ptr>> errors;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    errors.emplace_back(i, std::current_exception());
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (!errors.empty()) {
        auto first = std::min_element(errors.begin(), errors.end(),
                                      [](const auto& a, const auto& b) { return a.first < b.first; });
        std::rethrow_exception(first->second);
    }
}

} // namespace qse
