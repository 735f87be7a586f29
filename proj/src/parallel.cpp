#include "ace/parallel.hpp"

#include <omp.h>

#include <cstdlib>

namespace ace::parallel {

void set_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

void apply_env_threads() {
    if (const char* v = std::getenv("ACE_THREADS")) set_threads(std::atoi(v));
}

}  // namespace ace::parallel
