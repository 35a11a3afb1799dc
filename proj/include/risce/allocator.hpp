#pragma once

// Training allocates and frees the same multi-megabyte activation buffers
// every step. glibc serves those with fresh mmap pages by default, so each
// step pays for page faults and kernel zeroing. Keeping them on the heap
// removes that cost.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace risce {

/// Call once at program start. No-op outside glibc.
inline void keep_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace risce
