"""
Numba switch.

Set ``ARCHREP_NO_NUMBA=1`` before import to force the pure-numpy kernels.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

NO_NUMBA = os.environ.get("ARCHREP_NO_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = HAS_NUMBA and not NO_NUMBA


def njit(func):
    """Compile with numba when available, otherwise return ``func`` unchanged."""
    if not HAS_NUMBA:  # pragma: no cover
        return func
    return numba.njit(cache=True)(func)
