"""Numba switch.

Hot kernels are compiled with ``numba.njit`` unless numba is missing or the
environment variable ``ADAMEMENTO_NUMBA`` is set to ``0``/``false``/``off``,
in which case the vectorized numpy implementations are used instead.  The
choice is made once at import time.
"""
from __future__ import annotations

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

_FLAG = os.environ.get("ADAMEMENTO_NUMBA", "1").strip().lower()
USE_NUMBA = HAS_NUMBA and _FLAG not in ("0", "false", "off", "no")


def njit(func):
    """Compile ``func`` in nopython mode; identity when numba is absent."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
