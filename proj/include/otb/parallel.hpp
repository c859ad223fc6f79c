// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otb::par {

/// Number of worker threads used by the parallel kernels (>= 1).
int threads();
/// Sets the worker count; 0 selects the hardware default.
void set_threads(int n);

// Reductions are accumulated into fixed-size blocks and the block partials
// folded in index order, so results do not depend on the thread count.
inline constexpr std::size_t kReduceBlock = 256;

/// Deterministic blocked reduction.  `zero` must be the additive identity for
/// Acc; `fn(begin, end, acc)` accumulates rows [begin, end) into acc with +=.
template <class Acc, class BlockFn>
Acc blocked_reduce(std::size_t n, Acc zero, BlockFn&& fn,
                   std::size_t block = kReduceBlock) {
  if (n == 0) return zero;
  const std::size_t nblocks = (n + block - 1) / block;
  std::vector<Acc> partial(nblocks, zero);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads()) if (threads() > 1 && nblocks > 1)
#endif
  for (long long b = 0; b < static_cast<long long>(nblocks); ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * block;
    const std::size_t end = begin + block < n ? begin + block : n;
    fn(begin, end, partial[static_cast<std::size_t>(b)]);
  }
  Acc total = zero;
  for (const Acc& p : partial) total += p;
  return total;
}

/// Parallel loop over independent rows; `fn(i)` must not touch shared state
/// other than its own output slot.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads()) if (threads() > 1 && n > 1)
#endif
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
}

}  // namespace otb::par
