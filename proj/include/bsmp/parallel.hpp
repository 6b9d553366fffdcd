#pragma once

#include <cstddef>
#include <functional>

namespace bsmp {

/// Paths are processed in fixed-size blocks. The partition never depends on
/// the worker count, so per-block partial results merged in block order are
/// bit-identical for any number of threads.
inline constexpr std::ptrdiff_t kPathBlock = 1024;

/// Worker count used by parallel loops (>= 1). Affects speed only.
void set_thread_count(int threads);
int thread_count();

inline std::ptrdiff_t block_count(std::ptrdiff_t paths)
{
    return (paths + kPathBlock - 1) / kPathBlock;
}

/// Calls fn(block, begin, end) for every block of [0, paths).
void for_each_block(std::ptrdiff_t paths,
                    const std::function<void(std::ptrdiff_t block, std::ptrdiff_t begin, std::ptrdiff_t end)>& fn);

}  // namespace bsmp
