"""Optional numba acceleration.

Set ``CHESSGAP_NO_NUMBA=1`` to run every kernel as plain Python. Both paths
consume the same pre-drawn random numbers, so they produce the same chains.
"""

import os

_DISABLED = os.environ.get("CHESSGAP_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:
    _numba = None
    HAVE_NUMBA = False


def njit(func):
    """Compile ``func`` with numba when available and enabled."""
    if not HAVE_NUMBA:
        return func
    return _numba.njit(cache=True)(func)


def backend():
    return "numba" if HAVE_NUMBA else "python"
