#pragma once

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "cgar/common.hpp"

namespace cgar {

// Runs fn(i) for i in [0, n) across up to `threads` workers in contiguous
// chunks. Work assignment depends only on n and threads, so results
// gathered by index are reproducible at any thread count. The first
// exception thrown by a worker is rethrown on the caller.
template <typename Fn>
void parallel_for(long n, int threads, Fn&& fn) {
    if (n <= 0) return;
    if (threads < 1) throw ValidationError("parallel_for: threads must be positive");
    if (threads == 1 || n == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    const long workers = std::min<long>(threads, n);
    const long chunk = (n + workers - 1) / workers;
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (long w = 0; w < workers; ++w) {
        const long lo = w * chunk;
        const long hi = std::min(n, lo + chunk);
        pool.emplace_back([&, lo, hi] {
            try {
                for (long i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace cgar
