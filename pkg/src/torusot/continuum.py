"""Continuous-torus tooling: trigonometric densities and fields, the heat
semigroup, quadratic transport on the circle, and weak continuity residuals.

Densities and momentum fields on the unit torus are represented as finite
Fourier sums, which keeps every cube, facet, and pairing integral in closed
form.  The circle (``dim == 1``) additionally gets an exact quantile
machinery: the quadratic transport cost between two strictly positive
densities is the minimum over a rotation offset of the squared gap between
unrolled quantile functions, a convex one-dimensional minimisation.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import GridShape


# ---------------------------------------------------------------------------
# trigonometric polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigPoly:
    """Finite Fourier sum ``sum_k c_k exp(2 pi i k . x)`` on the unit torus."""

    dim: int
    freqs: np.ndarray  # (n_modes, dim) int64
    coeffs: np.ndarray  # (n_modes,) complex128

    @classmethod
    def from_modes(cls, dim: int, modes: dict) -> "TrigPoly":
        """Build a real-valued polynomial from ``{freq_tuple: coeff}``; the
        conjugate mode of every entry is added automatically."""
        acc = {}
        for k, c in modes.items():
            k = (k,) if np.isscalar(k) else tuple(int(v) for v in k)
            if len(k) != dim:
                raise ValueError(f"frequency {k} does not match dim {dim}")
            acc[k] = acc.get(k, 0.0) + complex(c)
            mk = tuple(-v for v in k)
            if mk != k:
                acc[mk] = acc.get(mk, 0.0) + np.conj(complex(c))
        freqs = np.array(sorted(acc), dtype=np.int64).reshape(len(acc), dim)
        coeffs = np.array([acc[tuple(k)] for k in freqs], dtype=np.complex128)
        return cls(dim, freqs, coeffs)

    @classmethod
    def zero(cls, dim: int) -> "TrigPoly":
        return cls(dim, np.zeros((0, dim), dtype=np.int64), np.zeros(0, dtype=np.complex128))

    def evaluate(self, points) -> np.ndarray:
        """Evaluate at points of shape ``(..., dim)`` (or ``(...)`` if dim 1)."""
        pts = np.asarray(points, dtype=np.float64)
        if self.dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        phase = 2j * np.pi * (pts @ self.freqs.T.astype(np.float64))
        vals = np.exp(phase) @ self.coeffs
        return vals.real

    def partial(self, axis: int) -> "TrigPoly":
        return TrigPoly(self.dim, self.freqs, self.coeffs * (2j * np.pi * self.freqs[:, axis]))

    def mean(self) -> float:
        zero = np.all(self.freqs == 0, axis=1)
        return float(np.sum(self.coeffs[zero]).real)

    def scaled(self, factor) -> "TrigPoly":
        return TrigPoly(self.dim, self.freqs, self.coeffs * factor)

    def plus(self, other: "TrigPoly") -> "TrigPoly":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        keys = {tuple(k): c for k, c in zip(self.freqs, self.coeffs)}
        for k, c in zip(other.freqs, other.coeffs):
            keys[tuple(k)] = keys.get(tuple(k), 0.0) + c
        freqs = np.array(sorted(keys), dtype=np.int64).reshape(len(keys), self.dim)
        coeffs = np.array([keys[tuple(k)] for k in freqs], dtype=np.complex128)
        return TrigPoly(self.dim, freqs, coeffs)

    def max_abs_freq(self) -> int:
        return 0 if self.freqs.size == 0 else int(np.max(np.abs(self.freqs)))

    def lipschitz_estimate(self, samples: int = 8192) -> float:
        """Max gradient norm on a dense sample grid (lower bound on the true
        Lipschitz constant, converging as the grid refines)."""
        grids = np.meshgrid(
            *[np.arange(samples if self.dim == 1 else 256) / (samples if self.dim == 1 else 256)]
            * self.dim,
            indexing="ij",
        )
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        sq = np.zeros(pts.shape[0])
        for i in range(self.dim):
            sq += self.partial(i).evaluate(pts) ** 2
        return float(np.sqrt(np.max(sq)))


def trig_inner(p: TrigPoly, q: TrigPoly) -> float:
    """Exact pairing ``integral p * q dx`` (modes annihilate unless opposite)."""
    lut = {tuple(k): c for k, c in zip(q.freqs, q.coeffs)}
    total = 0.0 + 0.0j
    for k, c in zip(p.freqs, p.coeffs):
        mk = tuple(-v for v in k)
        if mk in lut:
            total += c * lut[mk]
    return float(total.real)


def _axis_cube_factors(shape: GridShape, k: int) -> np.ndarray:
    """Per-axis factors ``integral_{a/N}^{(a+1)/N} exp(2 pi i k x) dx``."""
    n = shape.side
    a = np.arange(n)
    if k == 0:
        return np.full(n, 1.0 / n, dtype=np.complex128)
    w = 2j * np.pi * k
    return (np.exp(w * (a + 1) / n) - np.exp(w * a / n)) / w


def cube_integrals(poly: TrigPoly, shape: GridShape) -> np.ndarray:
    """Exact integrals of ``poly`` over every grid cell, flat site order."""
    n, d = shape.side, shape.dim
    if poly.dim != d:
        raise ValueError("dimension mismatch")
    out = np.zeros((n,) * d, dtype=np.complex128)
    for k, c in zip(poly.freqs, poly.coeffs):
        term = np.array([c], dtype=np.complex128).reshape((1,) * d)
        for i in range(d):
            fac = _axis_cube_factors(shape, int(k[i]))
            view = [None] * d
            view[i] = slice(None)
            term = term * fac[tuple(view)]
        out = out + term
    return out.real.ravel()


def facet_integrals(poly: TrigPoly, shape: GridShape, axis: int) -> np.ndarray:
    """Exact surface integrals of ``poly`` over the forward facets of ``axis``.

    The facet based at ``a`` along ``axis`` lives at coordinate
    ``(a_axis + 1)/N`` and spans the cell range in every other axis; for
    ``dim == 1`` this degenerates to point evaluation.
    """
    n, d = shape.side, shape.dim
    out = np.zeros((n,) * d, dtype=np.complex128)
    for k, c in zip(poly.freqs, poly.coeffs):
        term = np.array([c], dtype=np.complex128).reshape((1,) * d)
        for i in range(d):
            if i == axis:
                fac = np.exp(2j * np.pi * int(k[i]) * (np.arange(n) + 1) / n)
            else:
                fac = _axis_cube_factors(shape, int(k[i]))
            view = [None] * d
            view[i] = slice(None)
            term = term * fac[tuple(view)]
        out = out + term
    return out.real.ravel()


# ---------------------------------------------------------------------------
# densities and fields
# ---------------------------------------------------------------------------

POSITIVITY_GRID = 4096


@dataclass(frozen=True)
class ContinuumDensity:
    """Real trig-polynomial probability density (zero mode pinned to 1)."""

    poly: TrigPoly
    min_margin: float = field(default=0.0, compare=False)

    @classmethod
    def from_modes(cls, dim: int, modes: dict, check_positivity: bool = True):
        modes = dict(modes)
        zero = tuple([0] * dim)
        modes.pop(zero, None)
        poly = TrigPoly.from_modes(dim, modes).plus(
            TrigPoly(dim, np.zeros((1, dim), dtype=np.int64), np.ones(1, dtype=np.complex128))
        )
        return cls._wrap(poly, check_positivity)

    @classmethod
    def _wrap(cls, poly: TrigPoly, check_positivity: bool = True):
        if abs(poly.mean() - 1.0) > 1e-9:
            raise ValueError(f"density mass is {poly.mean()}, expected 1")
        margin = 0.0
        if check_positivity:
            n = POSITIVITY_GRID if poly.dim == 1 else 128
            grids = np.meshgrid(*[np.arange(n) / n] * poly.dim, indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=-1)
            margin = float(np.min(poly.evaluate(pts)))
            if margin < -1e-12:
                raise ValueError(f"density is negative on the sample grid (min {margin})")
        return cls(poly, min_margin=margin)

    @property
    def dim(self) -> int:
        return self.poly.dim

    def evaluate(self, points) -> np.ndarray:
        return self.poly.evaluate(points)

    def cdf(self, x) -> np.ndarray:
        """Distribution function on the circle (dim 1 only), ``F(0) = 0``."""
        if self.dim != 1:
            raise ValueError("cdf is defined for dim 1 only")
        x = np.asarray(x, dtype=np.float64)
        out = x.astype(np.float64).copy()
        for k, c in zip(self.poly.freqs[:, 0], self.poly.coeffs):
            if k == 0:
                continue
            w = 2j * np.pi * k
            out = out + (c * (np.exp(w * x) - 1.0) / w).real
        return out

    def quantile_rep(self, m: int) -> "QuantileRep":
        if self.dim != 1:
            raise ValueError("quantiles are defined for dim 1 only")
        u = (np.arange(m) + 0.5) / m
        grid = np.linspace(0.0, 1.0, 8193)
        fg = self.cdf(grid)
        x = np.interp(u, fg, grid)
        for _ in range(3):  # Newton polish; density is strictly positive
            x = x - (self.cdf(x) - u) / self.evaluate(x)
        return QuantileRep(u=u, q=x)


@dataclass(frozen=True)
class ContinuumField:
    """Momentum vector field with trig-polynomial components."""

    components: tuple

    @classmethod
    def from_modes(cls, dim: int, per_axis_modes: Sequence[dict]):
        if len(per_axis_modes) != dim:
            raise ValueError("need one mode table per axis")
        return cls(tuple(TrigPoly.from_modes(dim, m) for m in per_axis_modes))

    @property
    def dim(self) -> int:
        return self.components[0].dim


def heat_continuous(s: float, obj):
    """Heat semigroup on the unit torus: Fourier multiplier
    ``exp(-4 pi^2 |k|^2 s)`` applied to a TrigPoly, density, or field."""
    if s < 0:
        raise ValueError("heat time must be nonnegative")
    if isinstance(obj, ContinuumDensity):
        return ContinuumDensity._wrap(heat_continuous(s, obj.poly), check_positivity=False)
    if isinstance(obj, ContinuumField):
        return ContinuumField(tuple(heat_continuous(s, c) for c in obj.components))
    poly: TrigPoly = obj
    damp = np.exp(-4.0 * np.pi**2 * np.sum(poly.freqs.astype(np.float64) ** 2, axis=1) * s)
    return TrigPoly(poly.dim, poly.freqs, poly.coeffs * damp)


def trig_from_samples(samples: np.ndarray, max_freq: int) -> TrigPoly:
    """Fourier coefficients of a smooth 1-periodic function from uniform
    samples (dim 1), truncated to ``|k| <= max_freq``."""
    n = samples.size
    if 2 * max_freq + 1 > n:
        raise ValueError("not enough samples for the requested frequency range")
    fh = np.fft.fft(samples) / n
    modes = {}
    for k in range(-max_freq, max_freq + 1):
        modes[(k,)] = fh[k % n]
    freqs = np.array(sorted(modes), dtype=np.int64)
    coeffs = np.array([modes[tuple(k)] for k in freqs], dtype=np.complex128)
    return TrigPoly(1, freqs, coeffs)


# ---------------------------------------------------------------------------
# transport on the circle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileRep:
    """Quantile samples of a circle density on the midpoint grid of [0, 1]."""

    u: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.q) < -1e-12):
            raise ValueError("quantile values must be nondecreasing")

    def unrolled(self, v: np.ndarray) -> np.ndarray:
        """Quantile function extended by ``F^{-1}(v + 1) = F^{-1}(v) + 1``."""
        v = np.asarray(v, dtype=np.float64)
        k = np.floor(v)
        frac = v - k
        u_ext = np.concatenate([[self.u[-1] - 1.0], self.u, [self.u[0] + 1.0]])
        q_ext = np.concatenate([[self.q[-1] - 1.0], self.q, [self.q[0] + 1.0]])
        return np.interp(frac, u_ext, q_ext) + k


def _as_quantiles(mu, m: int) -> QuantileRep:
    if isinstance(mu, QuantileRep):
        return mu
    return mu.quantile_rep(m)


@dataclass
class CircleW2Report:
    value: float
    alpha: float
    resolution: int
    richardson: float


def circle_w2(mu0, mu1, m: int = 100_000, full_output: bool = False):
    """Quadratic transport distance between circle densities.

    Accepts :class:`ContinuumDensity`, :class:`QuantileRep`, or any object
    with a ``quantile_rep(m)`` method (e.g. piecewise-constant lifts).  The
    squared cost at rotation offset ``alpha`` is the mean squared gap between
    ``q0(u)`` and the unrolled ``q1(u - alpha)``; the offset functional is
    convex, so golden-section search finds the global minimum.
    """
    q0 = _as_quantiles(mu0, m)
    q1 = _as_quantiles(mu1, m)
    u = q0.u

    def cost(alpha: float) -> float:
        return float(np.mean((q0.q - q1.unrolled(u - alpha)) ** 2))

    alpha, best = _golden_section(cost, -1.0, 1.0, tol=1e-12)
    value = float(np.sqrt(best))
    if not full_output:
        return value
    coarse = []
    for frac in (4, 2):
        sub = slice(None, None, frac)
        qa, qb = QuantileRep(q0.u[sub], q0.q[sub]), QuantileRep(q1.u[sub], q1.q[sub])
        ua = qa.u
        coarse.append(
            float(np.sqrt(_golden_section(lambda al: float(np.mean((qa.q - qb.unrolled(ua - al)) ** 2)), -1.0, 1.0, 1e-12)[1]))
        )
    rich = value + (value - coarse[1]) / 3.0
    return CircleW2Report(value=value, alpha=float(alpha), resolution=m, richardson=rich)


def _golden_section(fn, lo: float, hi: float, tol: float):
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = fn(c), fn(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = fn(d)
    mid = 0.5 * (lo + hi)
    return mid, fn(mid)


def circle_geodesic(mu0, mu1, t_grid: np.ndarray, m: int = 100_000):
    """Displacement interpolation on the circle via quantile mixing.

    Returns ``(x_grid, rho, mom)`` where ``rho[k]`` and ``mom[k]`` sample the
    interpolating density and its momentum ``v_t rho_t`` at time
    ``t_grid[k]`` on a uniform spatial grid.  Endpoints must be strictly
    positive trig densities (their quantile derivatives are evaluated in
    closed form).
    """
    if not isinstance(mu0, ContinuumDensity) or not isinstance(mu1, ContinuumDensity):
        raise ValueError("circle_geodesic expects trig densities")
    q0 = mu0.quantile_rep(m)
    q1 = mu1.quantile_rep(m)
    u = q0.u

    alpha, _ = _golden_section(
        lambda al: float(np.mean((q0.q - q1.unrolled(u - al)) ** 2)), -1.0, 1.0, 1e-12
    )
    x0 = q0.q
    x1 = q1.unrolled(u - alpha)
    velocity = x1 - x0
    # dq/du = 1/rho(q); exact for trig endpoints.
    d0 = 1.0 / mu0.evaluate(np.mod(x0, 1.0))
    d1 = 1.0 / mu1.evaluate(np.mod(x1, 1.0))

    mx = 4096
    x_grid = np.arange(mx) / mx
    rho_out = np.empty((len(t_grid), mx))
    mom_out = np.empty((len(t_grid), mx))
    for idx, t in enumerate(np.asarray(t_grid, dtype=np.float64)):
        pos = (1.0 - t) * x0 + t * x1
        slope = (1.0 - t) * d0 + t * d1
        dens = 1.0 / slope
        mom = velocity * dens
        pos_mod = np.mod(pos, 1.0)
        order = np.argsort(pos_mod, kind="stable")
        ps = pos_mod[order]
        ext = np.concatenate([[ps[-1] - 1.0], ps, [ps[0] + 1.0]])
        rho_out[idx] = np.interp(
            x_grid, ext, np.concatenate([[dens[order][-1]], dens[order], [dens[order][0]]])
        )
        mom_out[idx] = np.interp(
            x_grid, ext, np.concatenate([[mom[order][-1]], mom[order], [mom[order][0]]])
        )
    return x_grid, rho_out, mom_out


# ---------------------------------------------------------------------------
# weak continuity residuals
# ---------------------------------------------------------------------------


def default_test_modes(dim: int, n_space: int = 4, n_time: int = 2):
    """Spatial test polynomials (real and imaginary parts of low modes) and
    time test frequencies."""
    phis = []
    if dim == 1:
        freq_list = [(k,) for k in range(1, n_space + 1)]
    else:
        freq_list = [(1, 0), (0, 1), (1, 1), (2, 1)][:n_space]
    for k in freq_list:
        phis.append(TrigPoly.from_modes(dim, {k: 0.5}))
        phis.append(TrigPoly.from_modes(dim, {k: -0.5j}))
    return phis, list(range(1, n_time + 1))


def weak_residual_from_integrals(
    times: np.ndarray,
    density_integrals: np.ndarray,
    field_integrals: np.ndarray,
    time_modes: Sequence[int],
    rule: str = "piecewise",
) -> float:
    """Max weak continuity residual over test functions.

    ``density_integrals[p, k]`` holds ``integral rho_{t_k} phi_p dx`` and
    ``field_integrals[p, k]`` holds ``integral V . grad(phi_p) dx``.  Two time
    rules are supported:

    - ``piecewise``: the density samples are exact node values of a path that
      is piecewise linear in time with per-interval constant field integrals
      (lifted lattice paths); the time integral is evaluated in closed form
      against ``psi(t) = sin(pi m t)``.
    - ``periodic``: the path is smooth and 1-periodic in time; node samples
      are paired with ``psi(t) = sin(2 pi m t)`` using the spectrally
      accurate periodic trapezoid rule.
    """
    times = np.asarray(times, dtype=np.float64)
    worst = 0.0
    if rule == "piecewise":
        if field_integrals.shape[1] != times.size - 1:
            raise ValueError("piecewise rule expects per-interval field integrals")
        dt = np.diff(times)
        for m in time_modes:
            # integral of psi over each interval, psi = sin(pi m t)
            anti = -np.cos(np.pi * m * times) / (np.pi * m)
            ipsi = np.diff(anti)
            slope = np.diff(density_integrals, axis=1) / dt
            res = np.sum((-slope + field_integrals) * ipsi, axis=1)
            worst = max(worst, float(np.max(np.abs(res))))
        return worst
    if rule == "periodic":
        tt = times[:-1] if np.isclose(times[-1] - times[0], 1.0) else times
        ii = density_integrals[:, : tt.size]
        jj = field_integrals[:, : tt.size]
        w = 1.0 / tt.size
        for m in time_modes:
            psi = np.sin(2.0 * np.pi * m * tt)
            dpsi = 2.0 * np.pi * m * np.cos(2.0 * np.pi * m * tt)
            res = w * np.sum(ii * dpsi + jj * psi, axis=1)
            worst = max(worst, float(np.max(np.abs(res))))
        return worst
    raise ValueError(f"unknown rule {rule!r}")


def weak_residual_trig_path(
    times: np.ndarray,
    densities: Sequence[TrigPoly],
    fields: Sequence[ContinuumField],
    phis: Sequence[TrigPoly] = None,
    time_modes: Sequence[int] = None,
    rule: str = "periodic",
) -> float:
    """Weak residual of a path given as trig objects sampled at ``times``."""
    dim = densities[0].dim
    if phis is None or time_modes is None:
        dphis, dmodes = default_test_modes(dim)
        phis = phis or dphis
        time_modes = time_modes or dmodes
    if len(phis) == 0:
        raise ValueError("empty test set")
    ii = np.empty((len(phis), len(densities)))
    jj = np.empty((len(phis), len(fields)))
    for p, phi in enumerate(phis):
        grads = [phi.partial(i) for i in range(dim)]
        for k, rho in enumerate(densities):
            ii[p, k] = trig_inner(rho, phi)
        for k, vf in enumerate(fields):
            jj[p, k] = sum(trig_inner(vf.components[i], grads[i]) for i in range(dim))
    return weak_residual_from_integrals(times, ii, jj, time_modes, rule=rule)
