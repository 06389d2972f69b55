"""Logarithmic and harmonic means, their partial derivatives, and the
elementary gap inequality relating their reciprocals.

Both means are symmetric, positively 1-homogeneous, monotone in each
argument, and vanish when either argument is zero.  The logarithmic mean is
``(b - a) / (log b - log a)`` away from the diagonal and is evaluated by a
series expansion near it (see :mod:`torusot._kernels` for the branch
threshold).
"""

import enum

import numpy as np

from . import _kernels


class MeanKind(enum.Enum):
    LOGARITHMIC = "logarithmic"
    HARMONIC = "harmonic"


def mean(kind: MeanKind, a, b):
    """Evaluate the mean; scalars in, scalar out; arrays in, array out.

    Raises ``ValueError`` on negative input.  ``mean(kind, 0, t) == 0`` for
    both kinds, matching the integral form of the logarithmic mean at the
    boundary.
    """
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if np.any(a_arr < 0) or np.any(b_arr < 0):
        raise ValueError("mean arguments must be nonnegative")
    scalar = a_arr.ndim == 0 and b_arr.ndim == 0
    a_arr, b_arr = np.broadcast_arrays(np.atleast_1d(a_arr), np.atleast_1d(b_arr))
    out = _kernels.mean_arrays(
        np.ascontiguousarray(a_arr), np.ascontiguousarray(b_arr), kind is MeanKind.HARMONIC
    )
    return float(out[0]) if scalar else out


def mean_partials(kind: MeanKind, a, b):
    """Partial derivatives ``(d/da, d/db)`` of the mean; positive inputs only."""
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if np.any(a_arr <= 0) or np.any(b_arr <= 0):
        raise ValueError("mean_partials requires strictly positive arguments")
    scalar = a_arr.ndim == 0 and b_arr.ndim == 0
    a_arr, b_arr = np.broadcast_arrays(np.atleast_1d(a_arr), np.atleast_1d(b_arr))
    da, db = _kernels.mean_partials_arrays(
        np.ascontiguousarray(a_arr), np.ascontiguousarray(b_arr), kind is MeanKind.HARMONIC
    )
    if scalar:
        return float(da[0]), float(db[0])
    return da, db


def mean_gap_bound_holds(a: float, b: float):
    """Check ``1/harm - 1/log <= ((b-a)^2/(ab)) * (1/harm)`` at ``(a, b)``.

    Returns ``(holds, slack)`` where ``slack = rhs - lhs >= 0`` when the
    inequality holds.  This is the edgewise estimate that converts a
    minimum/Lipschitz bound on a density into a comparison factor between the
    harmonic-mean and logarithmic-mean transport costs.
    """
    if a <= 0 or b <= 0:
        raise ValueError("mean_gap_bound_holds requires positive arguments")
    harm = mean(MeanKind.HARMONIC, a, b)
    logm = mean(MeanKind.LOGARITHMIC, a, b)
    lhs = 1.0 / harm - 1.0 / logm
    rhs = (b - a) ** 2 / (a * b) / harm
    slack = rhs - lhs
    return slack >= 0.0, slack


def log_mean_quadrature(a: float, b: float, n: int = 20000) -> float:
    """Independent oracle for the logarithmic mean: midpoint quadrature of
    ``integral_0^1 a^(1-p) b^p dp``.  Test helper, not a fast path."""
    if a < 0 or b < 0:
        raise ValueError("negative input")
    if a == 0.0 or b == 0.0:
        return 0.0
    p = (np.arange(n) + 0.5) / n
    return float(np.mean(a ** (1.0 - p) * b**p))
