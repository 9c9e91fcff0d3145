#pragma once

#include <cstdint>
#include <exception>
#include <utility>

#include "svic/common.hpp"

namespace svic {

// Runs fn(i) for i in [0, n). Iterations must be independent: each writes
// its own output slot, so the result is identical under any schedule.
// Exceptions are captured and rethrown after the loop (one survives).
template <class F>
void parallel_for(std::int64_t n, Exec exec, F&& fn) {
  if (exec == Exec::serial) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr eptr = nullptr;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(svic_parallel_for_err)
      if (!eptr) eptr = std::current_exception();
    }
  }
  if (eptr) std::rethrow_exception(eptr);
}

// Same contract with dynamic scheduling, for uneven work items
// (candidate trainings, per-k retrainings).
template <class F>
void parallel_for_dynamic(std::int64_t n, Exec exec, F&& fn) {
  if (exec == Exec::serial) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr eptr = nullptr;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(svic_parallel_for_err)
      if (!eptr) eptr = std::current_exception();
    }
  }
  if (eptr) std::rethrow_exception(eptr);
}

int max_threads();

}  // namespace svic
