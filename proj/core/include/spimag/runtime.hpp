// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace spimag {

// Keeps large freed blocks in the heap instead of returning them to the
// OS, so the multi-megabyte activations of batched rollouts do not pay
// page faults on every allocation. glibc only; a no-op elsewhere.
void tune_allocator();

}  // namespace spimag
