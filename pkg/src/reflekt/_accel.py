"""JIT switch.

Kernels in :mod:`reflekt.kernels` are compiled with numba unless the
environment variable ``REFLEKT_DISABLE_JIT`` is set to a truthy value or numba
is not importable.  In that case the pure-numpy implementations are used.
"""
import os

_FLAG = os.environ.get("REFLEKT_DISABLE_JIT", "").strip().lower()

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_JIT = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` in nopython mode when numba is available."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True)(func)
