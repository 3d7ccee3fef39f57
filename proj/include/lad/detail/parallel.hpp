#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lad::detail {

// Runs fn(0..count-1) on at most `bound` worker threads. Results are the
// caller's responsibility (write into a preallocated slot per index).
// The first exception thrown by any task is rethrown after all workers join.
inline void parallel_for(std::size_t count, std::size_t bound, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (bound == 0) bound = 1;
    if (bound == 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            std::size_t index;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= count || first_error) return;
                index = next++;
            }
            try {
                fn(index);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    std::size_t workers = std::min(bound, count);
    threads.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lad::detail
