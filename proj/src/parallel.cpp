#include "vqclust/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace vqclust {

namespace {
std::atomic<std::size_t> g_threads{1};
}

void set_thread_count(std::size_t n) { g_threads.store(n == 0 ? 1 : n); }

std::size_t thread_count() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = g_threads.load();
    if (workers <= 1 || n < 2 * workers) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = lo + chunk < n ? lo + chunk : n;
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi]() {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace vqclust
