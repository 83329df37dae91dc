#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace polydich {

/// Caps the worker count used by the library's parallel loops.
/// Mirrors the POLYDICH_THREADS environment variable handled by the CLI.
inline void set_max_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace polydich
