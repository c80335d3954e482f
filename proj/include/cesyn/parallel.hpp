#pragma once

#include <cstdint>
#include <functional>

namespace cesyn {

// Process-wide intra-op thread count. 1 (the default) runs every kernel on
// the calling thread and is the bit-exact reference mode.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks, one
// block per worker, so any given i always runs with the same memory ordering
// regardless of the thread count. Nested or contended calls fall back to the
// calling thread.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace cesyn
