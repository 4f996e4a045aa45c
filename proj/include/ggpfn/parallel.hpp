#pragma once

#include <cstddef>
#include <functional>

namespace ggpfn {

// Process-wide cap on worker threads for the convolution inner loops.
// Defaults to 1; the CLI raises it via --threads.
int max_threads();
void set_max_threads(int n);

// Runs fn(begin, end) over a partition of [0, n). Each index is handled by
// exactly one worker, so writers to disjoint slices stay race-free and the
// result is identical for any thread count. Small jobs (estimated by
// work_per_item * n) run inline.
void parallel_for(int n, std::size_t work_per_item,
                  const std::function<void(int, int)>& fn);

}  // namespace ggpfn
