#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace entwit {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> n{0};  // 0 = use hardware_concurrency
    return n;
}
}  // namespace detail

inline void set_num_threads(int n) { detail::thread_count_slot().store(n); }

inline int num_threads() {
    int n = detail::thread_count_slot().load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs f(i) for i in [0, n). Work is split into one contiguous chunk per
/// thread; every index is executed exactly once, so results do not depend on
/// the thread count as long as distinct indices touch distinct outputs.
template <class F>
void parallel_for(std::int64_t n, F&& f) {
    if (n <= 0) return;
    int nt = num_threads();
    if (nt <= 1 || n == 1) {
        for (std::int64_t i = 0; i < n; ++i) f(i);
        return;
    }
    if (nt > n) nt = static_cast<int>(n);
    std::vector<std::thread> workers;
    workers.reserve(nt - 1);
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    auto run_chunk = [&](std::int64_t lo, std::int64_t hi) {
        try {
            for (std::int64_t i = lo; i < hi; ++i) f(i);
        } catch (...) {
            if (!failed.exchange(true)) err = std::current_exception();
        }
    };
    std::int64_t chunk = (n + nt - 1) / nt;
    for (int t = 1; t < nt; ++t) {
        std::int64_t lo = t * chunk;
        std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back(run_chunk, lo, hi);
    }
    run_chunk(0, std::min(n, chunk));
    for (auto& w : workers) w.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace entwit
