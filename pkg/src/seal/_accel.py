"""Numba toggle.

Set ``SEAL_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
path. The flag is read once at import time.
"""

import os

_DISABLED = os.environ.get("SEAL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

USE_NUMBA = _njit is not None and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, otherwise a no-op decorator."""
    if USE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def tune_allocator(mmap_threshold=256 << 20, trim_threshold=1 << 30) -> bool:
    """Keep large numpy temporaries on the glibc heap instead of fresh mmaps.

    Training allocates many same-sized multi-megabyte arrays per epoch; with
    glibc's default policy each one page-faults in from scratch. Returns False
    where glibc is unavailable. Disabled by ``SEAL_NO_MALLOC_TUNING=1``.
    """
    if os.environ.get("SEAL_NO_MALLOC_TUNING"):
        return False
    try:
        import ctypes
        libc = ctypes.CDLL("libc.so.6")
        m_trim_threshold, m_mmap_threshold = -1, -3
        return bool(libc.mallopt(m_mmap_threshold, int(mmap_threshold))
                    and libc.mallopt(m_trim_threshold, int(trim_threshold)))
    except (OSError, AttributeError):
        return False
