"""Numba switch for the hot kernels.

Set ``EMULA_NUMBA=0`` before import to run every kernel as plain Python/numpy.
Both paths compute identical results; the flag only changes speed.
"""
import os

_flag = os.environ.get("EMULA_NUMBA", "1").strip().lower()
USE_NUMBA = _flag not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range


def backend():
    return "numba" if USE_NUMBA else "numpy"
