// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace irender {

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training allocates many multi-megabyte temporaries per step; without this
/// every step pays fresh page faults. Safe to call more than once.
void tune_allocator();

/// Number of worker threads used by parallel_for (>= 1).
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the thread count, and every index is processed by
/// exactly one call, so pure per-index work gives identical results for any
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace irender
