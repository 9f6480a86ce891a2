#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace mffbsde::par {

/// Process-wide worker cap. Defaults to std::thread::hardware_concurrency().
int max_threads();
void set_max_threads(int n);

/// Runs body(begin, end) over a partition of [0, n). Bodies must write to
/// disjoint locations; the partition is an implementation detail.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Fixed block count for reductions. Partial results are combined in block
/// order, so sums are bit-identical for any worker count.
inline constexpr std::size_t kReduceBlocks = 64;

/// Splits [0, n) into kReduceBlocks contiguous ranges, evaluates
/// block(b, begin, end) for each (possibly concurrently), then folds
/// combine(acc, result_b) sequentially for b = 0..kReduceBlocks-1.
template <class State, class BlockFn, class CombineFn>
State blocked_reduce(std::size_t n, State init, BlockFn block, CombineFn combine) {
    const std::size_t nb = n < kReduceBlocks ? (n == 0 ? 1 : n) : kReduceBlocks;
    std::vector<State> partial(nb, init);
    parallel_for(nb, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
            const std::size_t begin = n * b / nb;
            const std::size_t end = n * (b + 1) / nb;
            partial[b] = block(b, begin, end);
        }
    });
    State acc = init;
    for (std::size_t b = 0; b < nb; ++b) acc = combine(acc, partial[b]);
    return acc;
}

}  // namespace mffbsde::par
