#include "pspl/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace pspl {

int worker_threads() {
    static const int cached = [] {
        long v = 0;
        if (const char* env = std::getenv("PSPL_THREADS")) {
            char* end = nullptr;
            v = std::strtol(env, &end, 10);
            if (end == env || v < 0) v = 0;
        }
        if (v == 0) v = static_cast<long>(std::thread::hardware_concurrency());
        if (v < 1) v = 1;
        return static_cast<int>(v);
    }();
    return cached;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
}

}  // namespace pspl
