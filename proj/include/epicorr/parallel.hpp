// Deterministic work partitioning. Each index range is processed by exactly
// one worker with a fixed contiguous split, so results are bitwise independent
// of the thread count. Scalar reductions stay sequential (see grid.hpp).

#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace epicorr {

// Resolve a user thread request: 0 means "use the hardware concurrency".
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

// f(begin, end) over a contiguous chunk of [0, n).
template <class F>
void parallel_for(std::int64_t n, int threads, F&& f) {
    threads = resolve_threads(threads);
    if (n <= 0) return;
    const std::int64_t min_chunk = 64; // below this, spawning is pure overhead
    int workers = int(std::min<std::int64_t>(threads, (n + min_chunk - 1) / min_chunk));
    if (workers <= 1) {
        f(std::int64_t(0), n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 1; w < workers; ++w) {
        std::int64_t b = w * chunk;
        std::int64_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&f, b, e] { f(b, e); });
    }
    f(std::int64_t(0), std::min(n, chunk));
    for (auto& t : pool) t.join();
}

} // namespace epicorr
