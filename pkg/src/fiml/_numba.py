"""Optional numba acceleration.

Set ``FIML_NUMBA=0`` in the environment to force the pure numpy/scipy code
paths. The flag is read once at import time.
"""
import os

_env = os.environ.get("FIML_NUMBA", "1").strip().lower()
_requested = _env not in ("0", "false", "no", "off")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _requested


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f
