#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace melalign::par {

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

// Static-schedule parallel loop over [0, n). Every call site writes results
// into index-addressed slots and reduces serially afterwards, so the output
// is identical regardless of thread count.
template <class F>
void parallel_for(std::int64_t n, F&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) body(i);
#else
    for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace melalign::par
