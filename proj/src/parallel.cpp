// SPDX-License-Identifier: Apache-2.0
#include "mimk/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace mimk {

namespace {
std::atomic<std::size_t> g_threads{1};
constexpr std::size_t kMinWorkPerThread = 1 << 16;
}  // namespace

void set_num_threads(std::size_t n) { g_threads = std::max<std::size_t>(1, n); }

std::size_t num_threads() { return g_threads; }

void configure_threads_from_env() {
  const char* env = std::getenv("MIMK_THREADS");
  if (env == nullptr) return;
  try {
    const long n = std::stol(env);
    if (n >= 1) set_num_threads(static_cast<std::size_t>(n));
  } catch (const std::exception&) {
  }
}

void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn,
                  std::size_t work_per_item) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  std::size_t workers = std::min(num_threads(), count);
  const std::size_t total_work = count * std::max<std::size_t>(1, work_per_item);
  workers = std::min(workers, std::max<std::size_t>(1, total_work / kMinWorkPerThread));
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (std::size_t i = begin; i < std::min(end, begin + chunk); ++i) fn(i);
}

}  // namespace mimk
