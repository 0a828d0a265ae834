#pragma once

#include <cstdint>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace layersim {

// Worker count: LAYERSIM_THREADS caps it, default is the machine's cores.
inline int max_threads() {
    static int cached = [] {
#ifdef _OPENMP
        int n = omp_get_max_threads();
#else
        int n = 1;
#endif
        if (const char* env = std::getenv("LAYERSIM_THREADS")) {
            int cap = std::atoi(env);
            if (cap >= 1 && cap < n) n = cap;
        }
        return n;
    }();
    return cached;
}

// Map-style parallel loop: fn(i) writes only outputs owned by index i.
// Static schedule and one writer per element keep results bit-identical
// for any thread count. Small loops run serially.
template <typename F>
void parallel_for(int64_t n, F&& fn, int64_t grain = 256) {
#ifdef _OPENMP
    int nt = max_threads();
    if (nt > 1 && n >= 2 * grain) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int64_t i = 0; i < n; i++) fn(i);
        return;
    }
#else
    (void)grain;
#endif
    for (int64_t i = 0; i < n; i++) fn(i);
}

}  // namespace layersim
