"""Select between numba-compiled kernels and the plain numpy fallback.

Set ``FASTKM_DISABLE_JIT=1`` before import to force the fallback. The
fallback is also used when numba cannot be imported.
"""

import os

_DISABLED = os.environ.get("FASTKM_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    USE_NUMBA = True
except ImportError:
    _njit = None
    USE_NUMBA = False


def jit(func):
    """Compile ``func`` with numba when enabled, otherwise return it unchanged."""
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func


def python_version(func):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(func, "py_func", func)
