"""Hot numeric kernels: edge means, action sums, gradients, pairwise scans.

Every kernel exists in two semantically identical versions: a numba-compiled
loop (``*_numba``) and a vectorised numpy fallback (``*_numpy``).  The module
exports whichever family :mod:`torusot._accel` selected.  Arrays are flat
float64 site vectors of length ``M = N**d`` and facet fields of shape
``(d, M)``; neighbour index tables come from :func:`torusot.grid.neighbor_tables`.
"""

import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

# Relative half-gap below which the logarithmic mean switches to its series
# expansion: theta = m*(1 - u^2/3 - 4u^4/45) with m=(a+b)/2, u=(b-a)/(a+b).
# At the crossover both branches agree to ~1e-12; the series keeps full
# precision where the quotient formula cancels catastrophically.
LOG_MEAN_SERIES_CUT = 1e-4


# ---------------------------------------------------------------------------
# scalar helpers (shared by the numba path; numba inlines them)
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _log_mean_scalar(a: float, b: float) -> float:
    if a <= 0.0 or b <= 0.0:
        return 0.0
    s = a + b
    u = (b - a) / s
    if abs(u) < LOG_MEAN_SERIES_CUT:
        u2 = u * u
        return 0.5 * s * (1.0 - u2 / 3.0 - 4.0 * u2 * u2 / 45.0)
    r = b / a
    if 0.5 < r < 2.0:
        return (b - a) / math.log1p((b - a) / a)
    return (b - a) / (math.log(b) - math.log(a))


@njit(cache=True, inline="always")
def _log_mean_partials_scalar(a: float, b: float):
    s = a + b
    u = (b - a) / s
    if abs(u) < LOG_MEAN_SERIES_CUT:
        u2 = u * u
        f = 1.0 - u2 / 3.0 - 4.0 * u2 * u2 / 45.0
        fp = -2.0 * u / 3.0 - 16.0 * u * u2 / 45.0
        m = 0.5 * s
        da = 0.5 * f + m * fp * (-2.0 * b / (s * s))
        db = 0.5 * f + m * fp * (2.0 * a / (s * s))
        return da, db
    if 0.5 < b / a < 2.0:
        ell = math.log1p((b - a) / a)
    else:
        ell = math.log(b) - math.log(a)
    da = ((b - a) / a - ell) / (ell * ell)
    db = (ell - (b - a) / b) / (ell * ell)
    return da, db


@njit(cache=True, inline="always")
def _harm_mean_scalar(a: float, b: float) -> float:
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


@njit(cache=True, inline="always")
def _harm_mean_partials_scalar(a: float, b: float):
    s = a + b
    return 2.0 * b * b / (s * s), 2.0 * a * a / (s * s)


# ---------------------------------------------------------------------------
# elementwise mean evaluation
# ---------------------------------------------------------------------------


@njit(cache=True)
def _mean_arrays_numba(a, b, harmonic):
    out = np.empty_like(a)
    flat_a = a.ravel()
    flat_b = b.ravel()
    flat_o = out.ravel()
    for i in range(flat_a.size):
        if harmonic:
            flat_o[i] = _harm_mean_scalar(flat_a[i], flat_b[i])
        else:
            flat_o[i] = _log_mean_scalar(flat_a[i], flat_b[i])
    return out


def _mean_arrays_numpy(a, b, harmonic):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pos = (a > 0) & (b > 0)
    if harmonic:
        s = np.where(pos, a + b, 1.0)
        return np.where(pos, 2.0 * a * b / s, 0.0)
    s = a + b
    u = np.where(pos, (b - a) / np.where(s > 0, s, 1.0), 0.0)
    u2 = u * u
    series = 0.5 * s * (1.0 - u2 / 3.0 - 4.0 * u2 * u2 / 45.0)
    safe_a = np.where(pos, a, 1.0)
    safe_b = np.where(pos, b, 1.0)
    ratio = safe_b / safe_a
    mid_band = (ratio > 0.5) & (ratio < 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.where(
            mid_band,
            np.log1p((safe_b - safe_a) / safe_a),
            np.log(safe_b) - np.log(safe_a),
        )
        generic = np.where(ell != 0.0, (b - a) / np.where(ell != 0.0, ell, 1.0), series)
    out = np.where(np.abs(u) < LOG_MEAN_SERIES_CUT, series, generic)
    return np.where(pos, out, 0.0)


@njit(cache=True)
def _mean_partials_arrays_numba(a, b, harmonic):
    da = np.empty_like(a)
    db = np.empty_like(a)
    fa, fb = a.ravel(), b.ravel()
    fda, fdb = da.ravel(), db.ravel()
    for i in range(fa.size):
        if harmonic:
            fda[i], fdb[i] = _harm_mean_partials_scalar(fa[i], fb[i])
        else:
            fda[i], fdb[i] = _log_mean_partials_scalar(fa[i], fb[i])
    return da, db


def _mean_partials_arrays_numpy(a, b, harmonic):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = a + b
    if harmonic:
        return 2.0 * b * b / s**2, 2.0 * a * a / s**2
    u = (b - a) / s
    u2 = u * u
    f = 1.0 - u2 / 3.0 - 4.0 * u2 * u2 / 45.0
    fp = -2.0 * u / 3.0 - 16.0 * u * u2 / 45.0
    da_ser = 0.5 * f + 0.5 * s * fp * (-2.0 * b / s**2)
    db_ser = 0.5 * f + 0.5 * s * fp * (2.0 * a / s**2)
    ratio = b / a
    mid_band = (ratio > 0.5) & (ratio < 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.where(mid_band, np.log1p((b - a) / a), np.log(b) - np.log(a))
        ell_safe = np.where(ell != 0.0, ell, 1.0)
        da_gen = ((b - a) / a - ell) / ell_safe**2
        db_gen = (ell - (b - a) / b) / ell_safe**2
    near = np.abs(u) < LOG_MEAN_SERIES_CUT
    return np.where(near, da_ser, da_gen), np.where(near, db_ser, db_gen)


# ---------------------------------------------------------------------------
# action of a (density midpoint, momentum) pair, with gradient
# ---------------------------------------------------------------------------


@njit(cache=True)
def _action_sum_numba(rho, v, fwd, harmonic):
    total = 0.0
    d, m = v.shape
    for i in range(d):
        for a in range(m):
            va = v[i, a]
            if harmonic:
                th = _harm_mean_scalar(rho[a], rho[fwd[i, a]])
            else:
                th = _log_mean_scalar(rho[a], rho[fwd[i, a]])
            if va != 0.0:
                if th <= 0.0:
                    return np.inf
                total += va * va / th
    return total


def _action_sum_numpy(rho, v, fwd, harmonic):
    th = _mean_arrays_numpy(np.repeat(rho[None, :], fwd.shape[0], axis=0), rho[fwd], harmonic)
    live = v != 0.0
    if np.any(live & (th <= 0.0)):
        return np.inf
    safe = np.where(th > 0.0, th, 1.0)
    return float(np.sum(np.where(live, v * v / safe, 0.0)))


@njit(cache=True)
def _action_grad_numba(rho, v, fwd, harmonic):
    """Raw action sum plus gradients w.r.t. momentum and midpoint density.

    Returns ``(total, gv, grho)`` for ``total = sum V^2/theta`` over facets;
    scaling by the action prefactor is left to the caller.
    """
    d, m = v.shape
    gv = np.zeros((d, m))
    grho = np.zeros(m)
    total = 0.0
    for i in range(d):
        for a in range(m):
            va = v[i, a]
            ra = rho[a]
            rb = rho[fwd[i, a]]
            if harmonic:
                th = _harm_mean_scalar(ra, rb)
            else:
                th = _log_mean_scalar(ra, rb)
            if va == 0.0:
                continue
            if th <= 0.0:
                return np.inf, gv, grho
            total += va * va / th
            gv[i, a] = 2.0 * va / th
            if harmonic:
                da, db = _harm_mean_partials_scalar(ra, rb)
            else:
                da, db = _log_mean_partials_scalar(ra, rb)
            coef = -(va * va) / (th * th)
            grho[a] += coef * da
            grho[fwd[i, a]] += coef * db
    return total, gv, grho


def _action_grad_numpy(rho, v, fwd, harmonic):
    ra = np.repeat(rho[None, :], fwd.shape[0], axis=0)
    rb = rho[fwd]
    th = _mean_arrays_numpy(ra, rb, harmonic)
    live = v != 0.0
    gv = np.zeros_like(v)
    grho = np.zeros_like(rho)
    if np.any(live & (th <= 0.0)):
        return np.inf, gv, grho
    safe = np.where(th > 0.0, th, 1.0)
    total = float(np.sum(np.where(live, v * v / safe, 0.0)))
    gv = np.where(live, 2.0 * v / safe, 0.0)
    da, db = _mean_partials_arrays_numpy(ra, rb, harmonic)
    coef = np.where(live, -(v * v) / safe**2, 0.0)
    grho = np.sum(coef * da, axis=0)
    d = fwd.shape[0]
    for i in range(d):
        np.add.at(grho, fwd[i], coef[i] * db[i])
    return total, gv, grho


# ---------------------------------------------------------------------------
# whole-path action with gradient (the transport solver's hot loop)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _path_action_grad_numba(nodes, v, fwd, harmonic):
    """Raw action sum of a time-discretised path plus gradients.

    ``nodes`` is ``(T+1, M)``, ``v`` is ``(T, d, M)``; each interval is
    weighted by the midpoint density ``(nodes[k] + nodes[k+1]) / 2``.
    Returns ``(total, gnodes, gv)`` with the same shapes; the action
    prefactor and the time step are applied by the caller.
    """
    tsteps, d, m = v.shape
    gnodes = np.zeros((tsteps + 1, m))
    gv = np.zeros((tsteps, d, m))
    total = 0.0
    for k in range(tsteps):
        for i in range(d):
            for a in range(m):
                va = v[k, i, a]
                b = fwd[i, a]
                ra = 0.5 * (nodes[k, a] + nodes[k + 1, a])
                rb = 0.5 * (nodes[k, b] + nodes[k + 1, b])
                if harmonic:
                    th = _harm_mean_scalar(ra, rb)
                else:
                    th = _log_mean_scalar(ra, rb)
                if va == 0.0:
                    continue
                if th <= 0.0:
                    return np.inf, gnodes, gv
                total += va * va / th
                gv[k, i, a] = 2.0 * va / th
                if harmonic:
                    da, db = _harm_mean_partials_scalar(ra, rb)
                else:
                    da, db = _log_mean_partials_scalar(ra, rb)
                coef = -(va * va) / (th * th)
                gnodes[k, a] += 0.5 * coef * da
                gnodes[k + 1, a] += 0.5 * coef * da
                gnodes[k, b] += 0.5 * coef * db
                gnodes[k + 1, b] += 0.5 * coef * db
    return total, gnodes, gv


def _path_action_grad_numpy(nodes, v, fwd, harmonic):
    tsteps, d, m = v.shape
    gnodes = np.zeros((tsteps + 1, m))
    gv = np.zeros((tsteps, d, m))
    total = 0.0
    for k in range(tsteps):
        mid = 0.5 * (nodes[k] + nodes[k + 1])
        raw, gvk, gmid = _action_grad_numpy(mid, v[k], fwd, harmonic)
        if not np.isfinite(raw):
            return np.inf, gnodes, gv
        total += raw
        gv[k] = gvk
        gnodes[k] += 0.5 * gmid
        gnodes[k + 1] += 0.5 * gmid
    return total, gnodes, gv


# ---------------------------------------------------------------------------
# log-barrier terms for the constrained metric
# ---------------------------------------------------------------------------


@njit(cache=True)
def _floor_barrier_numba(interior, floor):
    """Barrier ``-sum log(x - floor)`` over interior node values."""
    t, m = interior.shape
    grad = np.zeros((t, m))
    val = 0.0
    for k in range(t):
        for a in range(m):
            gap = interior[k, a] - floor
            if gap <= 0.0:
                return np.inf, grad
            val -= math.log(gap)
            grad[k, a] = -1.0 / gap
    return val, grad


def _floor_barrier_numpy(interior, floor):
    gap = interior - floor
    if np.any(gap <= 0.0):
        return np.inf, np.zeros_like(interior)
    return float(-np.sum(np.log(gap))), -1.0 / gap


@njit(cache=True)
def _lip_barrier_numba(interior, coords, side, cap):
    """Barrier ``-sum log(L^2 - (f_p - f_q)^2)`` over site pairs and nodes,
    where ``L = cap * d(p, q)`` bounds the admissible increment."""
    t, m = interior.shape
    d = coords.shape[1]
    grad = np.zeros((t, m))
    val = 0.0
    for p in range(m):
        for q in range(p + 1, m):
            dist2 = 0.0
            for i in range(d):
                gap = abs(coords[p, i] - coords[q, i])
                if gap > side - gap:
                    gap = side - gap
                dist2 += gap * gap
            limit2 = cap * cap * dist2 / (side * side)
            for k in range(t):
                diff = interior[k, p] - interior[k, q]
                s = limit2 - diff * diff
                if s <= 0.0:
                    return np.inf, grad
                val -= math.log(s)
                grad[k, p] += 2.0 * diff / s
                grad[k, q] -= 2.0 * diff / s
    return val, grad


def _lip_barrier_numpy(interior, coords, side, cap):
    gap = np.abs(coords[:, None, :] - coords[None, :, :])
    gap = np.minimum(gap, side - gap).astype(np.float64)
    dist2 = np.sum(gap**2, axis=2) / side**2
    iu = np.triu_indices(coords.shape[0], k=1)
    limit2 = cap * cap * dist2[iu]
    diff = interior[:, iu[0]] - interior[:, iu[1]]
    s = limit2[None, :] - diff**2
    if np.any(s <= 0.0):
        return np.inf, np.zeros_like(interior)
    val = float(-np.sum(np.log(s)))
    g = 2.0 * diff / s
    grad = np.zeros_like(interior)
    np.add.at(grad.T, iu[0], g.T)
    np.subtract.at(grad.T, iu[1], g.T)
    return val, grad


# ---------------------------------------------------------------------------
# divergence and Lipschitz scan
# ---------------------------------------------------------------------------


@njit(cache=True)
def _divergence_numba(v, bwd):
    d, m = v.shape
    out = np.zeros(m)
    for i in range(d):
        for a in range(m):
            out[a] += v[i, a] - v[i, bwd[i, a]]
    return out / (2.0 * d)


def _divergence_numpy(v, bwd):
    d = v.shape[0]
    out = np.zeros(v.shape[1])
    for i in range(d):
        out += v[i] - v[i][bwd[i]]
    return out / (2.0 * d)


@njit(cache=True)
def _lipschitz_numba(f, coords, side):
    m, d = coords.shape
    best = 0.0
    for a in range(m):
        for b in range(a + 1, m):
            df = f[a] - f[b]
            if df == 0.0:
                continue
            dist2 = 0.0
            for i in range(d):
                gap = abs(coords[a, i] - coords[b, i])
                if gap > side - gap:
                    gap = side - gap
                dist2 += gap * gap
            ratio2 = df * df / dist2
            if ratio2 > best:
                best = ratio2
    return side * math.sqrt(best)


def _lipschitz_numpy(f, coords, side):
    gap = np.abs(coords[:, None, :] - coords[None, :, :])
    gap = np.minimum(gap, side - gap).astype(np.float64)
    dist2 = np.sum(gap**2, axis=2)
    np.fill_diagonal(dist2, 1.0)
    df2 = (f[:, None] - f[None, :]) ** 2
    np.fill_diagonal(df2, 0.0)
    return side * math.sqrt(float(np.max(df2 / dist2)))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    mean_arrays = _mean_arrays_numba
    mean_partials_arrays = _mean_partials_arrays_numba
    action_sum = _action_sum_numba
    action_grad = _action_grad_numba
    path_action_grad = _path_action_grad_numba
    floor_barrier = _floor_barrier_numba
    lip_barrier = _lip_barrier_numba
    divergence_sum = _divergence_numba
    lipschitz_scan = _lipschitz_numba
else:
    mean_arrays = _mean_arrays_numpy
    mean_partials_arrays = _mean_partials_arrays_numpy
    action_sum = _action_sum_numpy
    action_grad = _action_grad_numpy
    path_action_grad = _path_action_grad_numpy
    floor_barrier = _floor_barrier_numpy
    lip_barrier = _lip_barrier_numpy
    divergence_sum = _divergence_numpy
    lipschitz_scan = _lipschitz_numpy
