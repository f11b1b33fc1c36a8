"""Optional numba acceleration.

Set ``DGFRAC_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The flag is read once at import time.
"""
import os

_disabled = os.environ.get("DGFRAC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit

    USING_NUMBA = True

    def jit(fn):
        return _njit(cache=True, nogil=True)(fn)

except ImportError:
    USING_NUMBA = False

    def jit(fn):
        return fn
