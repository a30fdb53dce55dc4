#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bcad {

// Thread count used by the parallel broadcast loops. 0 = OpenMP default,
// 1 = force serial. Ignored when built without OpenMP.
void set_broadcast_threads(int threads);
int broadcast_threads();

namespace detail {

// Tensors below this size are not worth a fork/join.
inline constexpr std::int64_t kParallelGrainSize = 2048;

// Chunked parallel loop over [0, count). `body(begin, end)` must write only
// to disjoint locations per index; results are then identical for any
// partitioning. Exceptions thrown inside the region are captured and the
// first one is rethrown on the calling thread.
template <class Body>
void parallel_chunks(std::int64_t count, const Body& body) {
#ifdef _OPENMP
    const int requested = broadcast_threads();
    const bool parallel = requested != 1 && count >= kParallelGrainSize;
    if (parallel) {
        std::exception_ptr error;
        std::mutex error_mutex;
        const int threads = requested > 0 ? requested : omp_get_max_threads();
#pragma omp parallel num_threads(threads)
        {
            const int nt = omp_get_num_threads();
            const int id = omp_get_thread_num();
            const std::int64_t chunk = (count + nt - 1) / nt;
            const std::int64_t begin = std::min<std::int64_t>(count, id * chunk);
            const std::int64_t end = std::min<std::int64_t>(count, begin + chunk);
            if (begin < end) {
                try {
                    body(begin, end);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        }
        if (error) std::rethrow_exception(error);
        return;
    }
#endif
    if (count > 0) body(std::int64_t{0}, count);
}

} // namespace detail
} // namespace bcad
