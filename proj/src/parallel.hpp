#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace dsconv::detail {

// Runs fn(i) for i in [0, n), split into contiguous chunks across up to
// `threads` workers. Callers must write to disjoint state per index so the
// schedule cannot affect results.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const std::int64_t workers = std::min<std::int64_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t w = 0; w < workers; ++w) {
        const std::int64_t begin = n * w / workers;
        const std::int64_t end = n * (w + 1) / workers;
        pool.emplace_back([begin, end, &fn] {
            for (std::int64_t i = begin; i < end; ++i) {
                fn(i);
            }
        });
    }
    for (std::thread& t : pool) {
        t.join();
    }
}

}  // namespace dsconv::detail
