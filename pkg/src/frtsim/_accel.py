"""Numba acceleration shim.

Hot numeric kernels in this package are decorated with :func:`maybe_njit`.
When numba is importable and the environment variable ``FRTSIM_DISABLE_NUMBA``
is unset (or not ``"1"``), the kernels are compiled with ``numba.njit``.
Otherwise the undecorated pure numpy/Python implementation runs -- same
source, same results, just slower.  ``benchmarks/bench_kernels.py`` compares
the two paths.
"""

from __future__ import annotations

import os

DISABLE_ENV = "FRTSIM_DISABLE_NUMBA"

_disabled = os.environ.get(DISABLE_ENV, "0") == "1"

if not _disabled:
    try:
        import numba

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but be safe
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


def maybe_njit(func=None, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if func is None:
        return lambda f: maybe_njit(f, **kwargs)
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(func, **kwargs)
    return func


def accel_status() -> str:
    if HAVE_NUMBA:
        return "numba"
    if _disabled:
        return "numpy (disabled via %s=1)" % DISABLE_ENV
    return "numpy (numba unavailable)"
