#pragma once

#include <cstdint>
#include <functional>

namespace lamino {

/// Process-wide worker count. 1 = strict sequential mode (bit-exact
/// regression runs); 0 = hardware concurrency.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [begin, end). Work is split into contiguous
/// blocks, one per worker, so a given i always runs with the same
/// block-mates; callers keep determinism by making iterations
/// independent or by reducing per-block partials in index order.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

/// Block variant: fn(block_begin, block_end) per worker.
void parallel_for_blocks(
    std::int64_t begin, std::int64_t end,
    const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace lamino
