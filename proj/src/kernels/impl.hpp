#pragma once

#include "synthmr/kernels.hpp"

namespace synthmr::kernels::detail {

const KernelTable& scalar_table();

// nullptr when the library was built without the AVX2 translation unit.
const KernelTable* avx2_table();

// Half-sample-symmetric reflection of an index into [0, n).
inline long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * n;
  long m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace synthmr::kernels::detail
