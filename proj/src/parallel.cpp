#include "ggpfn/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace ggpfn {

namespace {
int g_max_threads = 1;
// Below this many scalar ops the spawn cost dominates.
constexpr std::size_t kInlineWork = 1u << 21;
}  // namespace

int max_threads() { return g_max_threads; }

void set_max_threads(int n) { g_max_threads = std::max(1, n); }

void parallel_for(int n, std::size_t work_per_item,
                  const std::function<void(int, int)>& fn) {
  if (n <= 0) return;
  const int workers = std::min(n, g_max_threads);
  if (workers <= 1 || work_per_item * std::size_t(n) < kInlineWork) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ggpfn
