#pragma once

#include <cstddef>
#include <functional>

namespace attrib {

// Worker count used by parallel_for. Defaults to 1 (fully sequential).
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n) using static contiguous chunks. Callers must
// write results to index-addressed slots so the outcome is independent of
// the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace attrib
