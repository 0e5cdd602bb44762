#pragma once

// Training allocates and frees the same multi-megabyte activation buffers on
// every step. glibc serves those with fresh mmap pages by default, so each
// step pays page faults and kernel zeroing; keeping them on the heap instead
// removes that cost. No-op on other C libraries.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mambarecon {

inline void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace mambarecon
