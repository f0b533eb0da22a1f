#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace tlss {

/// Thread cap from TLSS_THREADS (default 1). Work split by index ranges only,
/// so results never depend on the thread count.
inline int thread_count()
{
    if (const char* env = std::getenv("TLSS_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) {
                return std::min(n, 256);
            }
        } catch (const std::exception&) {
        }
    }
    return 1;
}

template <typename Fn>
void parallel_for(long n, Fn&& fn)
{
    const int threads = static_cast<int>(std::min<long>(thread_count(), n));
    if (threads <= 1) {
        for (long i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const long chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const long lo = t * chunk;
        const long hi = std::min(n, lo + chunk);
        pool.emplace_back([lo, hi, &fn] {
            for (long i = lo; i < hi; ++i) {
                fn(i);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

}  // namespace tlss
