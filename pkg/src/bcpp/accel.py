"""JIT plumbing for the hot kernels.

Every performance-critical loop in :mod:`bcpp._loops` is decorated with
:func:`njit` from this module.  By default that is numba's ``@njit``; setting
the environment variable ``BCPP_NO_NUMBA=1`` (or numba being unavailable)
swaps in a transparent pass-through so the same source runs interpreted.
Both paths execute the identical Python code and therefore produce
bit-identical results; the interpreted one is only suitable for small
workloads (debugging, fallback machines, the mode-equivalence tests).
"""

import functools
import os

import numpy as np

_FLAG = os.environ.get("BCPP_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG in ("1", "true", "yes", "on")

if not NUMBA_DISABLED:
    try:
        import numba  # noqa: F401
        from numba import njit as _numba_njit

        JIT_ENABLED = True
    except ImportError:
        JIT_ENABLED = False
else:
    JIT_ENABLED = False


if JIT_ENABLED:

    def njit(*args, **kwargs):
        return _numba_njit(*args, **kwargs)

else:

    def njit(*args, **kwargs):
        # Pass-through decorator; np.errstate silences the uint64 wraparound
        # warnings numpy emits for scalar RNG arithmetic.
        def decorate(func):
            @functools.wraps(func)
            def wrapper(*a, **k):
                with np.errstate(over="ignore"):
                    return func(*a, **k)

            return wrapper

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return decorate(args[0])
        return decorate
