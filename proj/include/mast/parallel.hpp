#ifndef MAST_PARALLEL_HPP
#define MAST_PARALLEL_HPP

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mast {

// Execution policy for data-parallel kernels. Every parallel kernel has a
// plain serial path which is the reference implementation; tests compare the
// two bitwise. Parallel paths only ever fill independent slots and reduce in
// a fixed serial order afterwards, so results are identical for any thread
// count.
enum class Exec { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <class Body>
void parallel_for(std::size_t n, Exec exec, Body&& body) {
#ifdef _OPENMP
  if (exec == Exec::parallel && n > 1) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) {
      body(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  (void)exec;
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace mast

#endif  // MAST_PARALLEL_HPP
