#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace seedloc {

// Number of worker threads used inside tensor operations. Every parallel
// loop assigns each index to exactly one worker and each index is computed
// by a self-contained sequential loop, so results are bit-identical for any
// worker count (including 1).
inline std::atomic<int>& worker_threads_storage() {
    static std::atomic<int> n{static_cast<int>(std::thread::hardware_concurrency() > 0
                                                   ? std::thread::hardware_concurrency()
                                                   : 1)};
    return n;
}

inline int worker_threads() { return worker_threads_storage().load(); }

inline void set_worker_threads(int n) { worker_threads_storage().store(n < 1 ? 1 : n); }

// Runs fn(i) for i in [begin, end). Indices are dealt out in fixed blocks;
// fn must only write state owned by index i.
template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
    const std::int64_t count = end - begin;
    if (count <= 0) return;
    int nthreads = worker_threads();
    if (nthreads > count) nthreads = static_cast<int>(count);
    if (nthreads <= 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    const std::int64_t chunk = (count + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
        const std::int64_t lo = begin + t * chunk;
        const std::int64_t hi = lo + chunk < end ? lo + chunk : end;
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace seedloc
