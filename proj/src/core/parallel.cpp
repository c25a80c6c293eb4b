#include "clfa/core/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clfa::core {

namespace {
std::atomic<int> g_threads{0};
}

void set_thread_count(int n) {
    g_threads.store(n < 0 ? 0 : n);
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

int thread_count() {
    int n = g_threads.load();
    if (n > 0) return n;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

bool should_parallelize(size_t work) {
#ifdef _OPENMP
    return thread_count() > 1 && work >= 16384;
#else
    (void)work;
    return false;
#endif
}

}  // namespace clfa::core
