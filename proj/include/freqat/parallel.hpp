#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

// Deterministic work distribution. Items are grouped into fixed-size chunks
// and chunks are claimed dynamically by workers; because any floating-point
// accumulation happens per chunk (sequential, in index order) and the caller
// reduces the chunk results in chunk order, the outcome is bit-identical for
// every worker count.

namespace freqat {

inline constexpr std::size_t kParallelChunk = 8;

inline std::size_t resolve_workers(std::size_t requested) {
    if (requested != 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

inline std::size_t chunk_count(std::size_t n) {
    return (n + kParallelChunk - 1) / kParallelChunk;
}

// fn(chunk_index, begin, end) with [begin,end) a fixed slice of [0,n).
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t workers, Fn&& fn) {
    if (n == 0) return;
    const std::size_t chunks = chunk_count(n);
    workers = std::min(resolve_workers(workers), chunks);
    auto run_chunk = [&fn, n](std::size_t c) {
        const std::size_t begin = c * kParallelChunk;
        const std::size_t end = std::min(n, begin + kParallelChunk);
        fn(c, begin, end);
    };
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&next, chunks, &run_chunk] {
            for (;;) {
                const std::size_t c = next.fetch_add(1);
                if (c >= chunks) return;
                run_chunk(c);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace freqat
