#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace faultloc::par {

/// Caps the worker count for all parallel kernels (CLI --jobs).
/// 0 keeps the OpenMP runtime default; 1 forces serial execution.
void set_jobs(int jobs);
int jobs();

/// True when the OpenMP path is compiled in and not capped to one worker.
bool parallel_enabled();

/// Data-parallel index map. The body must write only to index-owned
/// state; results are then independent of scheduling.
template <typename F>
void parallel_for(std::size_t n, F&& body, bool force_serial = false) {
    if (force_serial || !parallel_enabled() || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
#ifdef _OPENMP
    if (omp_in_parallel()) {  // no nested teams; caller already owns the cores
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        body(static_cast<std::size_t>(i));
#else
    for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

// Reductions are blocked at a fixed width and the per-block partials are
// merged in block order, so sums are bit-identical for any thread count.
inline constexpr std::size_t kReduceBlock = 64;

/// Deterministic blocked reduction over [0, n).
///   make()            -> zero accumulator
///   accum(acc, i)     -> add element i into acc (in index order within a block)
///   merge(into, from) -> fold one block accumulator into another
template <typename MakeAcc, typename AccumFn, typename MergeFn>
auto block_reduce(std::size_t n, MakeAcc make, AccumFn accum, MergeFn merge,
                  bool force_serial = false) {
    using Acc = decltype(make());
    const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
    if (nblocks <= 1) {
        Acc total = make();
        for (std::size_t i = 0; i < n; ++i) accum(total, i);
        return total;
    }
    std::vector<Acc> partial;
    partial.reserve(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) partial.push_back(make());
    parallel_for(nblocks, [&](std::size_t b) {
        const std::size_t lo = b * kReduceBlock;
        const std::size_t hi = std::min(n, lo + kReduceBlock);
        for (std::size_t i = lo; i < hi; ++i) accum(partial[b], i);
    }, force_serial);
    Acc total = make();
    for (std::size_t b = 0; b < nblocks; ++b) merge(total, partial[b]);
    return total;
}

}  // namespace faultloc::par
