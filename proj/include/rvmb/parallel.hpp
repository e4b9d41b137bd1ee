#pragma once

#include <functional>

namespace rvmb {

/// Worker count used when a call passes threads <= 0.
int default_threads();
void set_default_threads(int n);

/// Runs body(begin, end) over a static contiguous partition of [0, n).
/// Each index is visited by exactly one worker, so per-index writes are deterministic.
void parallel_for(int n, int threads, const std::function<void(int begin, int end)>& body);

}  // namespace rvmb
