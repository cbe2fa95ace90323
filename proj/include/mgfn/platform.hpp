// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace mgfn {

/// Keeps freed tensor buffers in the process heap instead of returning them
/// to the OS; training reallocates the same sizes every step. No-op outside glibc.
void retain_freed_memory();

}  // namespace mgfn
