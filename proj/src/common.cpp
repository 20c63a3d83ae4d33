#include "mixflow/common.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mixflow {

int thread_cap() {
  if (const char* env = std::getenv("MIXFLOW_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void apply_thread_cap() {
#ifdef _OPENMP
  omp_set_num_threads(thread_cap());
#endif
}

}  // namespace mixflow
