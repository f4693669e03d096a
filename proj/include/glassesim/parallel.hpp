#pragma once

#include <functional>

namespace glassesim {

/// Worker count used by parallel_for. Initialised from GLASSESIM_THREADS,
/// falling back to the number of hardware threads.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) for every i in [begin, end) on up to thread_count() workers.
/// Work is split into contiguous chunks; fn must only write state owned by i.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace glassesim
