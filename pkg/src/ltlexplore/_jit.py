"""Numba switch.

Hot loops are written in the subset of Python that numba compiles.  Setting
``LTLEXPLORE_DISABLE_NUMBA=1`` (read once, at import) runs the very same
functions as ordinary Python on numpy arrays, which is slow but makes the
kernels debuggable and lets the benchmark compare both paths.
"""

import os

_FLAG = os.environ.get("LTLEXPLORE_DISABLE_NUMBA", "").strip().lower()

NUMBA_ENABLED = _FLAG not in ("1", "true", "yes", "on")

if NUMBA_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if NUMBA_ENABLED:

    def njit(func=None, **kwargs):
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        if func is None:
            return lambda f: numba.njit(**kwargs)(f)
        return numba.njit(**kwargs)(func)

else:

    def njit(func=None, **kwargs):
        if func is None:
            return lambda f: f
        return func


def backend_name():
    return "numba" if NUMBA_ENABLED else "python"
