"""Hot numeric kernels with two interchangeable backends.

The numba backend jit-compiles im2col + BLAS matmul loops; the numpy
backend uses stride-trick windows and tensordot. Both compute bit-equal
results for the same dtype. Selection:

    TRISEG_BACKEND=auto|numba|numpy   (default auto: numba if importable)
"""

import os

from . import _numpy

_VALID = ("auto", "numba", "numpy")
_cache = {}


def backend_name() -> str:
    choice = os.environ.get("TRISEG_BACKEND", "auto").lower()
    if choice not in _VALID:
        raise ValueError(f"TRISEG_BACKEND must be one of {_VALID}, got {choice!r}")
    if choice == "auto":
        try:
            import numba  # noqa: F401
            return "numba"
        except ImportError:
            return "numpy"
    return choice


def get(name=None):
    """Return the kernel module for `name` (default: env selection)."""
    name = name or backend_name()
    if name not in _cache:
        if name == "numba":
            from . import _numba
            _cache["numba"] = _numba
        else:
            _cache["numpy"] = _numpy
    return _cache[name]
