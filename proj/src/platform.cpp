// SPDX-License-Identifier: Apache-2.0

#include "mgfn/platform.hpp"

#include <cstdlib>  // defines __GLIBC__ when applicable

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mgfn {

void retain_freed_memory() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20);  // glibc maximum on 64-bit
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace mgfn
