#include "mmvlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mmvlab {

namespace {
std::atomic<unsigned> g_override{0};
}

unsigned worker_count() {
  if (const unsigned o = g_override.load()) return o;
  if (const char* env = std::getenv("MMVLAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_worker_count(unsigned n) { g_override.store(n); }

void for_each_block(std::size_t n_items,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  for_each_block_range(n_items, 0, block_count(n_items), fn);
}

void for_each_block_range(std::size_t n_items, std::size_t first_block, std::size_t last_block,
                          const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  last_block = std::min(last_block, block_count(n_items));
  if (first_block >= last_block) return;
  const std::size_t blocks = last_block - first_block;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), blocks));
  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * kPathBlock;
    fn(begin, std::min(n_items, begin + kPathBlock), b);
  };
  if (workers <= 1) {
    for (std::size_t b = first_block; b < last_block; ++b) run_block(b);
    return;
  }
  std::atomic<std::size_t> next{first_block};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next.fetch_add(1); b < last_block; b = next.fetch_add(1)) {
        try {
          run_block(b);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mmvlab
