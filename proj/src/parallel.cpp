#include "lamino/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace lamino {

namespace {
std::atomic<int> g_threads{0};

int resolve_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n <= 0) {
        unsigned hc = std::thread::hardware_concurrency();
        n = hc == 0 ? 1 : static_cast<int>(hc);
    }
    return n;
}
} // namespace

void set_num_threads(int n) { g_threads.store(n, std::memory_order_relaxed); }

int num_threads() { return resolve_threads(); }

void parallel_for_blocks(
    std::int64_t begin, std::int64_t end,
    const std::function<void(std::int64_t, std::int64_t)>& fn) {
    const std::int64_t n = end - begin;
    if (n <= 0)
        return;
    const int workers =
        static_cast<int>(std::min<std::int64_t>(resolve_threads(), n));
    if (workers <= 1) {
        fn(begin, end);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const std::int64_t b = begin + w * chunk;
        const std::int64_t e = std::min(end, b + chunk);
        if (b >= e)
            break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& t : pool)
        t.join();
}

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
    parallel_for_blocks(begin, end,
                        [&fn](std::int64_t b, std::int64_t e) {
                            for (std::int64_t i = b; i < e; ++i)
                                fn(i);
                        });
}

} // namespace lamino
