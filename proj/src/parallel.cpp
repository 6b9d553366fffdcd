#include "bsmp/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bsmp {
namespace {

std::atomic<int> g_threads{1};

}  // namespace

void set_thread_count(int threads)
{
    g_threads = std::max(1, threads);
}

int thread_count()
{
    return g_threads;
}

void for_each_block(std::ptrdiff_t paths,
                    const std::function<void(std::ptrdiff_t, std::ptrdiff_t, std::ptrdiff_t)>& fn)
{
    const std::ptrdiff_t blocks = block_count(paths);
    const auto workers = static_cast<std::ptrdiff_t>(std::min<std::ptrdiff_t>(thread_count(), blocks));
    auto run = [&](std::ptrdiff_t b) { fn(b, b * kPathBlock, std::min(paths, (b + 1) * kPathBlock)); };
    if (workers <= 1) {
        for (std::ptrdiff_t b = 0; b < blocks; ++b)
            run(b);
        return;
    }

    std::atomic<std::ptrdiff_t> next{0};
    // The lowest failing block wins so error messages do not depend on scheduling.
    std::exception_ptr failure;
    std::ptrdiff_t failure_block = blocks;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::ptrdiff_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::ptrdiff_t b = next++; b < blocks; b = next++) {
                try {
                    run(b);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (b < failure_block) {
                        failure_block = b;
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    pool.clear();
    if (failure)
        std::rethrow_exception(failure);
}

}  // namespace bsmp
