#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace vcf {

// Thread budget: min(VC_THREADS, hardware concurrency), at least 1.
inline int thread_budget() {
    int hw = int(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("VC_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < hw) return cap;
        if (cap >= 1) return cap < hw ? cap : hw;
    }
    return hw;
}

// Runs fn(i) for i in [0, count). Work is split into contiguous blocks so
// results never depend on scheduling; falls back to a serial loop when the
// budget is 1 or the range is small.
inline void parallel_for(int count, const std::function<void(int)>& fn, int max_threads = 0) {
    if (count <= 0) return;
    int threads = max_threads > 0 ? max_threads : thread_budget();
    if (threads > count) threads = count;
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    const int block = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int lo = t * block;
        const int hi = lo + block < count ? lo + block : count;
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace vcf
