#include "manetl/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace manetl {

std::size_t worker_count() {
    static const std::size_t count = [] {
        std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
        const char* env = std::getenv("MANETL_THREADS");
        if (!env || !*env) return hw;
        try {
            long v = std::stol(env);
            if (v <= 0) return hw;
            return static_cast<std::size_t>(v);
        } catch (...) {
            return hw;
        }
    }();
    return count;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    auto run = [&](std::size_t w) {
        for (std::size_t i = w; i < n; i += workers) fn(i);
    };
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run, w);
    run(0);
    for (auto& t : threads) t.join();
}

}  // namespace manetl
