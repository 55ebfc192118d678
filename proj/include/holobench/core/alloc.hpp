#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace holo {

// Keeps large training buffers on the heap instead of fresh mmap/munmap pairs
// on every batch. A no-op outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

} // namespace holo
