#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace gridcrf {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results do not depend on the worker count. Static striping: worker t
// handles indices t, t+T, t+2T, ...
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
    threads = std::min<std::int64_t>(resolve_threads(threads), std::max<std::int64_t>(n, 1));
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([t, threads, n, &fn] {
            for (std::int64_t i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace gridcrf
