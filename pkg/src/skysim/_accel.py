"""Numba acceleration switch.

Hot kernels are written once as plain functions and compiled with @njit when
numba is importable and SKYSIM_FORCE_NUMPY is not set. The pure-Python/numpy
path is the reference implementation; the compiled path must match it bit for
bit on integer outputs and to float rounding on the rest.

Set SKYSIM_FORCE_NUMPY=1 to force the fallback path (useful for debugging and
for the kernel benchmark, which times both modes in subprocesses).
"""

import os

FORCE_NUMPY = os.environ.get("SKYSIM_FORCE_NUMPY", "").strip() in ("1", "true", "yes")

if not FORCE_NUMPY:
    try:
        from numba import njit as _njit
        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def maybe_njit(*args, **kwargs):
    """@njit(cache=True) when acceleration is on, identity decorator otherwise."""
    kwargs.setdefault("cache", True)
    if NUMBA_ENABLED:
        return _njit(*args, **kwargs)

    def passthrough(func):
        return func

    return passthrough
