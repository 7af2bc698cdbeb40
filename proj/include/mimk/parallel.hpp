// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace mimk {

/// Caps worker threads used inside operations. 0 or 1 runs inline.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Reads MIMK_THREADS; leaves the current setting alone when unset or invalid.
void configure_threads_from_env();

/// Calls fn(i) for i in [begin, end), split into contiguous chunks. Each index
/// is handled by exactly one thread, so ops that write disjoint outputs and
/// reduce in a fixed order stay bitwise deterministic at any thread count.
/// `work_per_item` is a rough flop estimate used to skip threading for tiny
/// loops.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn,
                  std::size_t work_per_item = 1);

}  // namespace mimk
