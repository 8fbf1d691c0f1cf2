"""Kernel backend selection.

Hot numeric kernels ship in two flavors: a numba @njit build and a pure
numpy/Python fallback. The active flavor is chosen once at import time from
the environment:

    MATFUN_BACKEND=numba   force numba (raises if numba is unavailable)
    MATFUN_BACKEND=numpy   force the pure-numpy fallback
    unset / auto           numba when importable, numpy otherwise

`benchmarks/bench_kernels.py` compares both flavors on the hot paths.
"""

import os

_VALID = ("auto", "numba", "numpy")


def _resolve() -> str:
    requested = os.environ.get("MATFUN_BACKEND", "auto").lower()
    if requested not in _VALID:
        raise ValueError(
            f"MATFUN_BACKEND must be one of {_VALID}, got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise
        return "numpy"
    return "numba"


ACTIVE = _resolve()
USE_NUMBA = ACTIVE == "numba"


def jit_or_fallback(numba_fn, numpy_fn):
    """Pick the active implementation of a kernel pair."""
    return numba_fn if USE_NUMBA else numpy_fn
