"""Numba availability switch.

Hot kernels in :mod:`torusot._kernels` are compiled with numba when it is
installed and the environment variable ``TORUSOT_DISABLE_NUMBA`` is unset
(or ``0``).  Setting ``TORUSOT_DISABLE_NUMBA=1`` selects the pure-numpy
fallback implementations instead; results are identical, only speed differs.
``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

NUMBA_ENABLED = False

if os.environ.get("TORUSOT_DISABLE_NUMBA", "0") != "1":
    try:
        from numba import njit  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):  # type: ignore[misc]
        """Pass-through replacement for numba.njit."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap
