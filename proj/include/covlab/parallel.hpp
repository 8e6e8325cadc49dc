#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace covlab {

inline int hardware_workers() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Resolves a --workers style request: 0 means "use all available".
inline int resolve_workers(int requested) {
    const int hw = hardware_workers();
    if (requested <= 0) return hw;
    return requested < hw ? requested : hw;
}

/**
 * Parallel loop over [0, n). The body must not depend on execution order;
 * all kernels in this library write to disjoint, pre-sized slots so that
 * results are identical for every worker count.
 */
template <typename Fn>
inline void parallel_for(std::int64_t n, int workers, Fn&& body) {
#ifdef _OPENMP
    if (workers != 1 && n > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_workers(workers))
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
#endif
    (void)workers;
    for (std::int64_t i = 0; i < n; ++i) body(i);
}

// Static variant for uniform-cost bodies (avoids the dynamic scheduler).
template <typename Fn>
inline void parallel_for_static(std::int64_t n, int workers, Fn&& body) {
#ifdef _OPENMP
    if (workers != 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(resolve_workers(workers))
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
#endif
    (void)workers;
    for (std::int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace covlab
