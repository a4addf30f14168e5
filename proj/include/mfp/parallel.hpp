#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mfp {

// Process-wide cap on worker threads. Work is split into contiguous index
// blocks and every index writes only its own output slot, so results do not
// depend on the number of workers.
int workers();
void set_workers(int n);

template <class Fn>
void parallel_for(int n, Fn&& fn) {
    int w = std::min(workers(), n);
    if (w <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex mu;
    int chunk = (n + w - 1) / w;
    for (int t = 0; t < w; ++t) {
        int lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace mfp
