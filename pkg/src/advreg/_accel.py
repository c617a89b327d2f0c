"""Numba dispatch.

Set ``ADVREG_DISABLE_JIT=1`` to force the pure-numpy code paths. The flag is
read once at import time.
"""

import os

_FLAG = os.environ.get("ADVREG_DISABLE_JIT", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when the JIT is active, identity decorator otherwise."""
    if USE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return "numba" if USE_NUMBA else "numpy"
