#pragma once

#include <cstdint>

namespace bcad {

// Cheap per-thread event counters, summed on demand. Worker threads spawned
// by the parallel broadcast loops each bump their own slot, so reads are
// consistent totals without atomics on the hot path. Counters only grow;
// callers measure intervals by taking before/after snapshots.
struct EvalCounters {
    std::uint64_t transcendental_evals = 0;
    std::uint64_t kernel_element_visits = 0;
};

namespace detail {
EvalCounters& local_counters();
}

inline void count_transcendental(std::uint64_t n = 1) {
    detail::local_counters().transcendental_evals += n;
}

inline void count_element_visits(std::uint64_t n) {
    detail::local_counters().kernel_element_visits += n;
}

// Totals across all threads that ever touched a counter.
EvalCounters counter_totals();

} // namespace bcad
