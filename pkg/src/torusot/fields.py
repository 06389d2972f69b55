"""Densities and momentum fields on the lattice torus, their action and
energy forms, the forward-difference continuity residual, and the projection
and lifting maps that connect the lattice to the continuous torus.

Conventions.  A density stores ``N**d`` nonnegative values averaging to one
(it is a density with respect to the uniform site measure).  A momentum field
stores one real value per forward-oriented facet as a ``(d, N**d)`` array;
``values[i, a]`` belongs to the interface between ``a`` and ``a + e_i``.  The
action of a pair is

    ``(1 / (4 d^2 N^(d+2))) * sum_facets V(R)^2 / mean(rho(a), rho(a + e_i))``

with the logarithmic or harmonic mean selecting the metric flavour; facets
with zero momentum contribute nothing even when the edge mean vanishes, and a
nonzero momentum across a dead edge makes the action infinite.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .continuum import (
    ContinuumDensity,
    ContinuumField,
    QuantileRep,
    TrigPoly,
    _axis_cube_factors,
    cube_integrals,
    default_test_modes,
    facet_integrals,
    weak_residual_from_integrals,
)
from .grid import GridShape, coords_table, neighbor_tables
from .means import MeanKind

MASS_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Density:
    """Probability density on the lattice: values average to 1, all >= 0."""

    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.shape.n_sites,):
            raise ValueError(
                f"density needs {self.shape.n_sites} values, got {vals.shape}"
            )
        if np.any(vals < 0):
            raise ValueError(f"negative density value {vals.min()}")
        mass = float(vals.sum())
        if abs(mass - self.shape.n_sites) > MASS_RTOL * self.shape.n_sites:
            raise ValueError(
                f"density mass {mass} deviates from {self.shape.n_sites}"
            )

    @classmethod
    def uniform(cls, shape: GridShape) -> "Density":
        return cls(shape, np.ones(shape.n_sites))

    def min(self) -> float:
        return float(self.values.min())


@dataclass(frozen=True, eq=False)
class MomentumField:
    """Real value per forward facet, as a ``(dim, n_sites)`` array."""

    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.shape.dim, self.shape.n_sites):
            raise ValueError(
                f"momentum field needs shape {(self.shape.dim, self.shape.n_sites)}, "
                f"got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("momentum field has non-finite entries")

    @classmethod
    def zero(cls, shape: GridShape) -> "MomentumField":
        return cls(shape, np.zeros((shape.dim, shape.n_sites)))


@dataclass(frozen=True)
class RegularityReport:
    """Minimum, Lipschitz constant, and the largest regularity level of a
    density (the floor ``delta`` with ``min >= delta`` and ``Lip <= 1/delta``)."""

    min_value: float
    lip_n: float
    delta_star: float


def regularity(rho: Density) -> RegularityReport:
    lip = lipschitz_constant(rho.shape, rho.values)
    delta = rho.min() if lip == 0 else min(rho.min(), 1.0 / lip)
    return RegularityReport(min_value=rho.min(), lip_n=lip, delta_star=delta)


def action_prefactor(shape: GridShape) -> float:
    d = shape.dim
    return 1.0 / (4.0 * d * d * shape.side ** (d + 2))


def action(rho: Density, v: MomentumField, kind: MeanKind = MeanKind.LOGARITHMIC) -> float:
    """Kinetic action of a (density, momentum) pair; ``inf`` when momentum
    crosses an edge whose mean density vanishes."""
    if rho.shape != v.shape:
        raise ValueError("density and momentum live on different grids")
    fwd, _ = neighbor_tables(rho.shape)
    raw = _kernels.action_sum(rho.values, v.values, fwd, kind is MeanKind.HARMONIC)
    return action_prefactor(rho.shape) * raw


def action_ordered_pairs(rho: Density, v_pairs: np.ndarray, kind=MeanKind.LOGARITHMIC) -> float:
    """Action of a general (not necessarily antisymmetric) ordered-pair field.

    ``v_pairs`` has shape ``(dim, 2, n_sites)``: entry ``[i, 0, a]`` is the
    value on ``(a, a + e_i)`` and ``[i, 1, a]`` the value on ``(a, a - e_i)``.
    Normalised so that an antisymmetric field reproduces :func:`action`.
    """
    fwd, bwd = neighbor_tables(rho.shape)
    d = rho.shape.dim
    total = 0.0
    for i in range(d):
        th_f = _kernels.mean_arrays(rho.values, rho.values[fwd[i]], kind is MeanKind.HARMONIC)
        th_b = _kernels.mean_arrays(rho.values, rho.values[bwd[i]], kind is MeanKind.HARMONIC)
        for th, vv in ((th_f, v_pairs[i, 0]), (th_b, v_pairs[i, 1])):
            live = vv != 0
            if np.any(live & (th <= 0)):
                return np.inf
            safe = np.where(th > 0, th, 1.0)
            total += float(np.sum(np.where(live, vv * vv / safe, 0.0)))
    return 0.5 * action_prefactor(rho.shape) * total


def antisymmetrize(shape: GridShape, v_pairs: np.ndarray) -> MomentumField:
    """Antisymmetric part of an ordered-pair field, as a facet field."""
    fwd, _ = neighbor_tables(shape)
    out = np.empty((shape.dim, shape.n_sites))
    for i in range(shape.dim):
        out[i] = 0.5 * (v_pairs[i, 0] - v_pairs[i, 1][fwd[i]])
    return MomentumField(shape, out)


def dirichlet_form(shape: GridShape, f: np.ndarray, g: np.ndarray = None) -> float:
    """Energy form ``N^(2-d) sum_a sum_i (f(a+e_i)-f(a)) (g(a+e_i)-g(a))``."""
    f = np.asarray(f, dtype=np.float64)
    g = f if g is None else np.asarray(g, dtype=np.float64)
    if f.shape != (shape.n_sites,) or g.shape != (shape.n_sites,):
        raise ValueError("site function size mismatch")
    fwd, _ = neighbor_tables(shape)
    total = 0.0
    for i in range(shape.dim):
        total += float(np.sum((f[fwd[i]] - f) * (g[fwd[i]] - g)))
    return shape.side ** (2 - shape.dim) * total


def l2_inner(shape: GridShape, f: np.ndarray, g: np.ndarray) -> float:
    """Normalised inner product ``N^-d sum_a f g``."""
    return float(np.sum(np.asarray(f) * np.asarray(g))) / shape.n_sites


def lipschitz_constant(shape: GridShape, f: np.ndarray) -> float:
    """Exact Lipschitz constant w.r.t. the toroidal metric (full pairwise scan)."""
    f = np.ascontiguousarray(np.asarray(f, dtype=np.float64))
    if f.size == 1:
        return 0.0
    return float(_kernels.lipschitz_scan(f, coords_table(shape), shape.side))


def divergence(v: MomentumField) -> np.ndarray:
    """Discrete divergence ``(1/2d) sum_i (V(R_{a,i+}) - V(R_{a,i-}))``."""
    _, bwd = neighbor_tables(v.shape)
    return _kernels.divergence_sum(v.values, bwd)


# ---------------------------------------------------------------------------
# time-discretised paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransportPath:
    """Uniform time grid: ``T+1`` node densities, ``T`` interval momenta."""

    shape: GridShape
    node_densities: np.ndarray  # (T+1, n_sites)
    interval_momenta: np.ndarray  # (T, dim, n_sites)

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.asarray(self.node_densities, dtype=np.float64))
        mom = np.ascontiguousarray(np.asarray(self.interval_momenta, dtype=np.float64))
        object.__setattr__(self, "node_densities", nodes)
        object.__setattr__(self, "interval_momenta", mom)
        if nodes.ndim != 2 or nodes.shape[1] != self.shape.n_sites:
            raise ValueError("node density array has wrong shape")
        if mom.shape != (nodes.shape[0] - 1, self.shape.dim, self.shape.n_sites):
            raise ValueError("interval momentum array has wrong shape")

    @property
    def tsteps(self) -> int:
        return self.interval_momenta.shape[0]

    def density(self, k: int) -> Density:
        return Density(self.shape, self.node_densities[k])

    def momentum(self, k: int) -> MomentumField:
        return MomentumField(self.shape, self.interval_momenta[k])


def continuity_residual(path: TransportPath):
    """Forward-difference continuity defect per interval and site.

    Returns ``(residual, max_abs)`` with ``residual[k, a] =
    (rho_{k+1}(a) - rho_k(a)) / dt + div(V_k)(a)`` on the uniform grid.
    """
    tsteps = path.tsteps
    dt = 1.0 / tsteps
    _, bwd = neighbor_tables(path.shape)
    res = np.empty((tsteps, path.shape.n_sites))
    for k in range(tsteps):
        res[k] = (path.node_densities[k + 1] - path.node_densities[k]) / dt
        res[k] += _kernels.divergence_sum(path.interval_momenta[k], bwd)
    return res, float(np.max(np.abs(res))) if res.size else 0.0


# ---------------------------------------------------------------------------
# projections: continuum -> lattice
# ---------------------------------------------------------------------------


def project_density(mu, shape: GridShape) -> Density:
    """Cell averages ``N^d mu(Q_a)`` of a continuum density.

    Exact for trig densities (closed-form antiderivatives) and for
    piecewise-constant lifts on the same grid.
    """
    if isinstance(mu, ContinuumDensity):
        masses = cube_integrals(mu.poly, shape)
        vals = shape.n_sites * masses
        vals = np.where((vals < 0) & (vals > -1e-12), 0.0, vals)
        return Density(shape, vals)
    if isinstance(mu, PiecewiseConstantDensity):
        if mu.shape == shape:
            return Density(shape, mu.values.copy())
        if shape.dim == 1:
            edges = np.arange(shape.side + 1) / shape.side
            cdf = mu.cdf(edges)
            return Density(shape, shape.side * np.diff(cdf))
        raise ValueError("cross-grid projection of lifts is supported in dim 1 only")
    raise TypeError(f"cannot project {type(mu).__name__}")


def project_density_sampled(fn, shape: GridShape, samples_per_cell: int = 64) -> Density:
    """Approximate projection of an arbitrary callable density by Riemann
    sums over each cell.  Quadrature error is O(1/samples); prefer trig
    densities, for which :func:`project_density` is exact."""
    pts_1d = (np.arange(samples_per_cell) + 0.5) / samples_per_cell / shape.side
    grids = np.meshgrid(*[pts_1d] * shape.dim, indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    corners = coords_table(shape).astype(np.float64) / shape.side
    vals = np.array([np.mean(fn(c[None, :] + offsets)) for c in corners])
    vals *= shape.n_sites / vals.sum()
    return Density(shape, vals)


def project_momentum(v: ContinuumField, shape: GridShape) -> MomentumField:
    """Facet surface integrals ``2 d N^d * integral_R V_i`` (point evaluation
    in dim 1); linear in the field."""
    if v.dim != shape.dim:
        raise ValueError("dimension mismatch")
    out = np.empty((shape.dim, shape.n_sites))
    for i in range(shape.dim):
        out[i] = 2.0 * shape.dim * shape.n_sites * facet_integrals(v.components[i], shape, i)
    return MomentumField(shape, out)


# ---------------------------------------------------------------------------
# lifts: lattice -> continuum
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PiecewiseConstantDensity:
    """Lift of a lattice density: constant on each grid cell, total mass 1."""

    shape: GridShape
    values: np.ndarray

    def evaluate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if self.shape.dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        cells = np.floor(np.mod(pts, 1.0) * self.shape.side).astype(np.int64)
        cells = np.minimum(cells, self.shape.side - 1)
        idx = np.zeros(cells.shape[:-1], dtype=np.int64)
        for i in range(self.shape.dim):
            idx = idx * self.shape.side + cells[..., i]
        return self.values[idx]

    def mass(self) -> float:
        return float(self.values.sum()) / self.shape.n_sites

    def cdf(self, x) -> np.ndarray:
        """Exact piecewise-linear distribution function (dim 1)."""
        if self.shape.dim != 1:
            raise ValueError("cdf is defined for dim 1 only")
        n = self.shape.side
        x = np.asarray(x, dtype=np.float64)
        wrap = np.floor(x)
        frac = x - wrap
        cum = np.concatenate([[0.0], np.cumsum(self.values)]) / n
        cell = np.minimum(np.floor(frac * n).astype(np.int64), n - 1)
        inner = cum[cell] + self.values[cell] * (frac - cell / n)
        return inner + wrap

    def quantile_rep(self, m: int, mollify_width: float = 0.0) -> QuantileRep:
        if self.shape.dim != 1:
            raise ValueError("quantiles are defined for dim 1 only")
        if self.values.min() <= 0:
            raise ValueError("quantiles require a strictly positive lift")
        u = (np.arange(m) + 0.5) / m
        if mollify_width <= 0.0:
            n = self.shape.side
            breaks = np.arange(n + 1) / n
            fb = self.cdf(breaks)
            q = np.interp(u, fb, breaks)
            return QuantileRep(u=u, q=q)
        # Box-filtered density evaluated through the exact cdf, then a dense
        # cumulative trapezoid; the mollified density is piecewise linear, so
        # the grid error is quadratic in the spacing.
        grid = np.arange(1 << 16) / (1 << 16)
        w = mollify_width
        dens = (self.cdf(grid + 0.5 * w) - self.cdf(grid - 0.5 * w)) / w
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))]) / (1 << 16)
        cdf = np.append(cdf, 1.0)
        xg = np.append(grid, 1.0)
        q = np.interp(u, cdf / cdf[-1], xg)
        return QuantileRep(u=u, q=q)

    def fourier(self, max_freq: int) -> ContinuumDensity:
        """Exact Fourier coefficients, truncated to ``|k| <= max_freq``."""
        if self.shape.dim != 1:
            raise ValueError("fourier lift is implemented for dim 1 only")
        modes = {}
        for k in range(1, max_freq + 1):
            coef = np.sum(self.values * _axis_cube_factors(self.shape, -k))
            modes[(k,)] = complex(coef)
        return ContinuumDensity.from_modes(1, modes, check_positivity=False)


@dataclass(frozen=True, eq=False)
class PiecewiseLinearField:
    """Lift of a momentum field: component ``i`` interpolates linearly in
    ``x_i`` between the two facet values of the cell, scaled by ``1/(2dN)``."""

    shape: GridShape
    facet_values: np.ndarray  # (dim, n_sites)

    def evaluate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if self.shape.dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        n, d = self.shape.side, self.shape.dim
        frac = np.mod(pts, 1.0)
        cells = np.minimum(np.floor(frac * n).astype(np.int64), n - 1)
        idx = np.zeros(cells.shape[:-1], dtype=np.int64)
        for i in range(d):
            idx = idx * n + cells[..., i]
        _, bwd = neighbor_tables(self.shape)
        out = np.empty(pts.shape)
        for i in range(d):
            xi = frac[..., i] * n - cells[..., i]
            vp = self.facet_values[i][idx]
            vm = self.facet_values[i][bwd[i]][idx]
            out[..., i] = ((1.0 - xi) * vm + xi * vp) / (2.0 * d * n)
        return out


def lift_density(rho: Density) -> PiecewiseConstantDensity:
    return PiecewiseConstantDensity(rho.shape, rho.values.copy())


def lift_momentum(v: MomentumField) -> PiecewiseLinearField:
    return PiecewiseLinearField(v.shape, v.values.copy())


# ---------------------------------------------------------------------------
# weak residual of lifted paths (exact integrals)
# ---------------------------------------------------------------------------


def _axis_linear_factors(shape: GridShape, k: int) -> np.ndarray:
    """Per-axis factors ``integral_{a/N}^{(a+1)/N} (N x - a) exp(2 pi i k x) dx``."""
    n = shape.side
    a = np.arange(n)
    if k == 0:
        return np.full(n, 0.5 / n, dtype=np.complex128)
    w = 2j * np.pi * k
    length = 1.0 / n
    inner = np.exp(w * length) * (length / w * n - n / w**2) + n / w**2
    return np.exp(w * a / n) * inner


def lifted_weak_residual(
    path: TransportPath,
    phis: Sequence[TrigPoly] = None,
    time_modes: Sequence[int] = None,
) -> float:
    """Weak continuity residual of the lifted path against trig test
    functions, with all space and time integrals in closed form.

    The lifted density is piecewise constant in space and piecewise linear in
    time; the lifted field is piecewise linear in space and constant on each
    time interval, which matches the ``piecewise`` time rule exactly.
    """
    shape = path.shape
    d, n = shape.dim, shape.side
    if phis is None or time_modes is None:
        dphis, dmodes = default_test_modes(d)
        phis = phis or dphis
        time_modes = time_modes or dmodes
    if len(phis) == 0:
        raise ValueError("empty test set")
    _, bwd = neighbor_tables(shape)
    tsteps = path.tsteps
    times = np.linspace(0.0, 1.0, tsteps + 1)
    ii = np.empty((len(phis), tsteps + 1))
    jj = np.zeros((len(phis), tsteps))
    for p, phi in enumerate(phis):
        cube_phi = cube_integrals(phi, shape)
        ii[p] = path.node_densities @ cube_phi
        for i in range(d):
            g = phi.partial(i)
            # integral over each cell of (linear ramp in x_i) * g, split into
            # the constant part (backward facet value) and the ramp part.
            const_part = np.zeros((n,) * d, dtype=np.complex128)
            ramp_part = np.zeros((n,) * d, dtype=np.complex128)
            for kvec, c in zip(g.freqs, g.coeffs):
                t_const = np.array([c], dtype=np.complex128).reshape((1,) * d)
                t_ramp = np.array([c], dtype=np.complex128).reshape((1,) * d)
                for j in range(d):
                    cube_f = _axis_cube_factors(shape, int(kvec[j]))
                    view = [None] * d
                    view[j] = slice(None)
                    if j == i:
                        t_const = t_const * cube_f[tuple(view)]
                        t_ramp = t_ramp * _axis_linear_factors(shape, int(kvec[j]))[tuple(view)]
                    else:
                        t_const = t_const * cube_f[tuple(view)]
                        t_ramp = t_ramp * cube_f[tuple(view)]
            # ramp weight multiplies (Vp - Vm); constant weight multiplies Vm
                const_part += t_const
                ramp_part += t_ramp
            wc = const_part.real.ravel()
            wr = ramp_part.real.ravel()
            for k in range(tsteps):
                vp = path.interval_momenta[k, i]
                vm = vp[bwd[i]]
                jj[p, k] += (np.sum(vm * (wc - wr)) + np.sum(vp * wr)) / (2.0 * d * n)
    return weak_residual_from_integrals(times, ii, jj, time_modes, rule="piecewise")
