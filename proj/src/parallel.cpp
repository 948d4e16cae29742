#include "faultloc/parallel.hpp"

#include <atomic>

namespace faultloc::par {

namespace {
std::atomic<int> g_jobs{0};
}

void set_jobs(int jobs) {
    g_jobs.store(jobs < 0 ? 0 : jobs);
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#endif
}

int jobs() { return g_jobs.load(); }

bool parallel_enabled() {
#ifdef _OPENMP
    return g_jobs.load() != 1;
#else
    return false;
#endif
}

}  // namespace faultloc::par
