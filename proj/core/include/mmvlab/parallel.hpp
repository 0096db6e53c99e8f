#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

namespace mmvlab {

/// Worker count: MMVLAB_THREADS when set (>= 1), hardware concurrency otherwise.
unsigned worker_count();
/// Overrides the environment for the current process (0 restores it).
void set_worker_count(unsigned n);

/// Paths are always split into blocks of this size. Block boundaries, and
/// therefore every per-block partial sum, do not depend on the worker count.
inline constexpr std::size_t kPathBlock = 512;

/// Calls fn(begin, end, block) for every block of [0, n_items); blocks are
/// distributed over worker_count() threads. fn must only write to
/// block-private storage.
void for_each_block(std::size_t n_items,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Same as for_each_block restricted to blocks [first_block, last_block).
void for_each_block_range(std::size_t n_items, std::size_t first_block, std::size_t last_block,
                          const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t block_count(std::size_t n_items) {
  return (n_items + kPathBlock - 1) / kPathBlock;
}

/// Per-block partial results merged into `total` in block order. Blocks are
/// processed in bounded chunks so memory does not grow with n_items, and the
/// merge order (hence every floating-point sum) is independent of the
/// worker count.
template <class Partial, class Make, class Work, class Merge>
void block_reduce(std::size_t n_items, Partial& total, Make make, Work work, Merge merge) {
  const std::size_t blocks = block_count(n_items);
  const std::size_t chunk = std::max<std::size_t>(4, 4 * static_cast<std::size_t>(worker_count()));
  for (std::size_t c0 = 0; c0 < blocks; c0 += chunk) {
    const std::size_t c1 = std::min(blocks, c0 + chunk);
    std::vector<Partial> parts;
    parts.reserve(c1 - c0);
    for (std::size_t b = c0; b < c1; ++b) parts.push_back(make());
    for_each_block_range(n_items, c0, c1, [&](std::size_t begin, std::size_t end, std::size_t b) {
      work(begin, end, parts[b - c0]);
    });
    for (auto& p : parts) merge(total, p);
  }
}

}  // namespace mmvlab
