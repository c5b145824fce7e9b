#ifndef ICR_PARALLEL_HPP
#define ICR_PARALLEL_HPP

#include <exception>
#include <mutex>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace icr {

inline void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Runs body(i) for i in [0, n). Iterations must be independent; each one
/// writes disjoint output so results do not depend on the schedule. The
/// exception thrown by the lowest failing index is rethrown.
template <typename Body>
void parallel_for(Eigen::Index n, Body&& body) {
  std::exception_ptr first_error;
  Eigen::Index first_index = n;
  std::mutex guard;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 256)
#endif
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (i < first_index) {
        first_index = i;
        first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace icr

#endif  // ICR_PARALLEL_HPP
