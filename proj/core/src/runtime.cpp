// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace spimag {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // glibc rejects larger values
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace spimag
