"""Numba switch.

Set ``HETUNE_PURE_NUMPY=1`` to bypass numba and route every kernel through
its numpy twin. The flag is read once at import time.
"""
import os

_FLAG = os.environ.get("HETUNE_PURE_NUMPY", "").strip().lower()
PURE_NUMPY = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not PURE_NUMPY


def jit(func):
    """Compile ``func`` with numba if available, else return None."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(func)
