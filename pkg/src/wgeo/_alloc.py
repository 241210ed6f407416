"""Process-wide allocator tuning for batch numerics.

Training churns through ~1 MB numpy temporaries at a high rate. With glibc's
defaults each one is served by mmap (or trimmed back to the kernel right
away), so every batch op pays first-touch page faults, which are especially
expensive under hosted/container kernels. Keeping freed blocks on the heap
makes the allocator reuse warm pages and speeds the hot loops up several-fold.

No-op on platforms without glibc's mallopt.
"""

import ctypes

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3


def tune_allocator() -> bool:
    """Keep large freed blocks heap-resident; returns True if applied."""
    try:
        libc = ctypes.CDLL("libc.so.6")
        ok = libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
        ok &= libc.mallopt(_M_TOP_PAD, 1 << 24)
        ok &= libc.mallopt(_M_MMAP_THRESHOLD, 1 << 26)
        return bool(ok)
    except (OSError, AttributeError):
        return False
