"""Numba switch.

Kernels are written twice: a loop form compiled with numba and a vectorized
numpy form. ``EMVS_BIN_DISABLE_JIT=1`` (or a missing numba install) routes
every dispatcher to the numpy form.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
DISABLE_JIT = os.environ.get("EMVS_BIN_DISABLE_JIT", "0").strip().lower() in (
    "1",
    "true",
    "yes",
    "on",
)
USE_NUMBA = HAVE_NUMBA and not DISABLE_JIT


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
