"""Experiment harness: the quantitative-inequality suite, the metric
convergence experiment, and the almost-isometry / almost-surjectivity
measurements for the map that smooths a continuum measure and projects it
onto the lattice.

Every experiment emits :class:`ResultRow` records with a stable ``anchor``
tag naming the inequality being checked, and the CSV writer keeps the output
byte-deterministic for a fixed seed (modulo one timestamp comment line).
"""

import csv
import datetime
import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .continuum import (
    ContinuumDensity,
    ContinuumField,
    TrigPoly,
    circle_w2,
    heat_continuous,
)
from .exact import w2n_exact
from .fields import (
    Density,
    MomentumField,
    action,
    lift_density,
    project_density,
    project_momentum,
    regularity,
)
from .grid import GridShape
from .heat import heat_apply, heat_apply_momentum, laplacian_solve, poincare_constant
from .means import MeanKind
from .regpaths import (
    METRIC_COMPARISON_CONSTANT,
    build_regularized_path,
    choose_constants,
)
from .solver import MetricReport, SolverOptions, solve_distance
from .fields import dirichlet_form, l2_inner


@dataclass
class ExperimentConfig:
    experiment: str = "suite"
    dim: int = 1
    n_list: list = dfield(default_factory=lambda: [8])
    s_list: list = dfield(default_factory=lambda: [0.02])
    tsteps: int = 16
    tol: float = 1e-3
    seed: int = 42
    cases: int = 20
    out_dir: str = "."
    delta: float = 0.5

    def __post_init__(self):
        if not self.n_list or not self.s_list:
            raise ValueError("n_list and s_list must be nonempty")


@dataclass
class ResultRow:
    experiment: str
    anchor: str
    params: dict
    measured: float
    bound: float
    slack: float
    passed: bool


def _row(experiment, anchor, params, measured, bound, slack_extra=0.0) -> ResultRow:
    slack = bound + slack_extra - measured
    return ResultRow(
        experiment=experiment,
        anchor=anchor,
        params=dict(params),
        measured=float(measured),
        bound=float(bound),
        slack=float(slack),
        passed=bool(measured <= bound + slack_extra),
    )


def _info_row(experiment, anchor, params, measured) -> ResultRow:
    return ResultRow(
        experiment=experiment,
        anchor=anchor,
        params=dict(params),
        measured=float(measured),
        bound=math.inf,
        slack=math.inf,
        passed=True,
    )


def write_csv(rows, path: str, timestamp: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# torusot results schema=1\n")
        if timestamp:
            fh.write(f"# generated {datetime.datetime.now().isoformat()}\n")
        writer = csv.writer(fh)
        writer.writerow(["experiment", "anchor", "params", "measured", "bound", "slack", "pass"])
        for r in rows:
            params = ";".join(f"{k}={v}" for k, v in sorted(r.params.items()))
            writer.writerow(
                [r.experiment, r.anchor, params, repr(r.measured), repr(r.bound), repr(r.slack), r.passed]
            )


def all_pass(rows) -> bool:
    return all(r.passed for r in rows)


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------


def random_trig_density(dim: int, rng: np.random.Generator, amp: float = 0.25, floor: float = 0.1) -> ContinuumDensity:
    """Random positive trig density: 1 plus a few low modes, rejection-sampled
    until the minimum clears ``floor``."""
    if dim == 1:
        freq_list = [(1,), (2,), (3,)]
    else:
        freq_list = [(1, 0), (0, 1), (1, 1), (1, -1)]
    while True:
        modes = {}
        for k in freq_list:
            re, im = rng.normal(0.0, amp / 2, size=2)
            modes[k] = re + 1j * im
        try:
            mu = ContinuumDensity.from_modes(dim, modes)
        except ValueError:
            continue
        if mu.min_margin > floor:
            return mu


def random_trig_field(dim: int, rng: np.random.Generator, amp: float = 0.3) -> ContinuumField:
    if dim == 1:
        freq_list = [(1,), (2,)]
    else:
        freq_list = [(1, 0), (0, 1), (1, 1)]
    comps = []
    for _ in range(dim):
        modes = {(0,) * dim: rng.normal(0.0, amp)}
        for k in freq_list:
            re, im = rng.normal(0.0, amp / 2, size=2)
            modes[k] = re + 1j * im
        comps.append(modes)
    return ContinuumField.from_modes(dim, comps)


def _random_smooth_poly(dim: int, rng: np.random.Generator, amp: float) -> TrigPoly:
    """Low-mode random trig field (real-valued, no sign constraint)."""
    if dim == 1:
        freq_list = [(1,), (2,), (3,)]
    else:
        freq_list = [(1, 0), (0, 1), (1, 1), (1, -1)]
    modes = {}
    for k in freq_list:
        re, im = rng.normal(0.0, amp / 2, size=2)
        modes[k] = re + 1j * im
    return TrigPoly.from_modes(dim, modes)


def random_density(shape: GridShape, rng: np.random.Generator, roughness: float = 0.8) -> Density:
    """Normalised exponential of a smooth random lattice field."""
    poly = _random_smooth_poly(shape.dim, rng, roughness)
    pts = (np.asarray(np.meshgrid(*[np.arange(shape.side)] * shape.dim, indexing="ij"))
           .reshape(shape.dim, -1).T + 0.5) / shape.side
    f = poly.evaluate(pts)
    vals = np.exp(f - f.mean())
    vals *= shape.n_sites / vals.sum()
    return Density(shape, vals)


def random_regular_density(shape: GridShape, delta: float, rng: np.random.Generator) -> Density:
    """Random density inside the regularity class: minimum ``>= delta`` and
    Lipschitz constant ``<= 1/delta`` (field amplitude shrunk until both hold)."""
    base = random_density(shape, rng)
    logf = np.log(base.values)
    scale = 1.0
    while True:
        vals = np.exp(scale * logf)
        vals *= shape.n_sites / vals.sum()
        rho = Density(shape, vals)
        rep = regularity(rho)
        if rep.min_value >= delta and (rep.lip_n == 0 or rep.lip_n <= 1.0 / delta):
            return rho
        scale *= 0.7


def random_zero_mean(shape: GridShape, rng: np.random.Generator) -> np.ndarray:
    f = rng.normal(size=shape.n_sites)
    return f - f.mean()


def canonical_pair():
    """The reference circle pair: ``1 + sin(2 pi x)/2`` and its rotation by 0.3."""
    mu0 = ContinuumDensity.from_modes(1, {(1,): -0.25j})
    shift = np.exp(-2j * np.pi * 0.3)
    mu1 = ContinuumDensity.from_modes(1, {(1,): -0.25j * shift})
    return mu0, mu1


# ---------------------------------------------------------------------------
# the inequality suite
# ---------------------------------------------------------------------------


def _solve(rho0, rho1, cfg, kind=MeanKind.LOGARITHMIC, delta=None, refine=False) -> MetricReport:
    opts = SolverOptions(
        tsteps=cfg.tsteps,
        kind=kind,
        delta=delta,
        tol=max(cfg.tol * 1e-2, 1e-8),
        refine=refine,
        max_tsteps=max(cfg.tsteps * 4, 64),
    )
    return solve_distance(rho0, rho1, opts)


def run_inequality_suite(cfg: ExperimentConfig):
    """One row per (inequality, random case) for each lattice size in the
    config; every solved distance contributes ``2 * tol`` of slack."""
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for n in cfg.n_list:
        shape = GridShape(cfg.dim, n)
        delta = cfg.delta
        # the harmonic/constrained comparison needs n > delta**-2
        delta_factor_level = delta if n > delta**-2 else math.sqrt(2.0 / n) * 1.2
        for case in range(cfg.cases):
            params = {"dim": cfg.dim, "n": n, "case": case}
            rho0 = random_regular_density(shape, delta, rng)
            rho1 = random_regular_density(shape, delta, rng)
            sig0 = random_regular_density(shape, delta, rng)
            sig1 = random_regular_density(shape, delta, rng)

            # spectral gap inequalities
            f = random_zero_mean(shape, rng)
            const = poincare_constant(shape)
            rows.append(
                _row("suite", "spectral-gap-l2", params, l2_inner(shape, f, f),
                     const * dirichlet_form(shape, f), 1e-10)
            )
            pot = laplacian_solve(shape, f)
            rows.append(
                _row("suite", "spectral-gap-energy", params, dirichlet_form(shape, pot),
                     const * l2_inner(shape, f, f), 1e-10)
            )

            # heat monotonicity of the action
            v = MomentumField(shape, rng.normal(size=(shape.dim, shape.n_sites)))
            s_heat = 0.02
            rows.append(
                _row("suite", "heat-action-monotone", params,
                     action(heat_apply(shape, s_heat, rho0), MomentumField(shape, heat_apply_momentum(shape, s_heat, v.values))),
                     action(rho0, v), 1e-10)
            )

            # solved metrics
            rep_log = _solve(rho0, rho1, cfg)
            rep_harm = _solve(rho0, rho1, cfg, kind=MeanKind.HARMONIC)
            rows.append(
                _row("suite", "log-le-harmonic-metric", params, rep_log.value,
                     rep_harm.value, 2 * cfg.tol * 2)
            )

            rho0_f = random_regular_density(shape, delta_factor_level, rng)
            rho1_f = random_regular_density(shape, delta_factor_level, rng)
            rep_constrained = _solve(rho0_f, rho1_f, cfg, delta=delta_factor_level)
            rep_harm_f = _solve(rho0_f, rho1_f, cfg, kind=MeanKind.HARMONIC)
            factor = (1.0 - 1.0 / (delta_factor_level**4 * n**2)) ** -0.5
            rows.append(
                _row("suite", "harmonic-le-constrained-factor",
                     {**params, "delta": round(delta_factor_level, 6)},
                     rep_harm_f.value, factor * rep_constrained.value, 2 * cfg.tol * 2)
            )

            if cfg.dim == 1:
                w2_lift = circle_w2(
                    lift_density(rho0).quantile_rep(20_000),
                    lift_density(rho1).quantile_rep(20_000),
                )
                rows.append(
                    _row("suite", "lift-lower-bound", params, w2_lift,
                         rep_harm.value, 2 * cfg.tol)
                )

            w2n, _ = w2n_exact(rho0, rho1)
            rows.append(
                _row("suite", "metric-vs-wasserstein", params, rep_log.value,
                     METRIC_COMPARISON_CONSTANT * math.sqrt(cfg.dim) * w2n, 2 * cfg.tol)
            )

            # midpoint convexity of the squared metric
            mid0 = Density(shape, 0.5 * (rho0.values + sig0.values))
            mid1 = Density(shape, 0.5 * (rho1.values + sig1.values))
            rep_sig = _solve(sig0, sig1, cfg)
            rep_mid = _solve(mid0, mid1, cfg)
            rows.append(
                _row("suite", "midpoint-convexity", params, rep_mid.objective,
                     0.5 * rep_log.objective + 0.5 * rep_sig.objective, 4 * cfg.tol)
            )

            # kinetic projection bound for a continuum pair
            mu = random_trig_density(cfg.dim, rng, floor=0.2)
            vf = random_trig_field(cfg.dim, rng)
            rows.append(
                _row("suite", "projection-kinetic-bound", params,
                     action(project_density(mu, shape), project_momentum(vf, shape)),
                     _kinetic_bound(mu, vf, shape), 1e-9)
            )

            if cfg.dim == 1:
                mu0 = random_trig_density(1, rng)
                mu1 = random_trig_density(1, rng)
                w2_cont = circle_w2(mu0, mu1, m=20_000)
                rows.append(
                    _row("suite", "cube-diameter", params,
                         circle_w2(lift_density(project_density(mu0, shape)).quantile_rep(20_000), mu0),
                         math.sqrt(cfg.dim) / n, 1e-6)
                )
                w2n_proj, _ = w2n_exact(project_density(mu0, shape), project_density(mu1, shape))
                rows.append(
                    _row("suite", "pushforward-comparison", params, w2n_proj,
                         w2_cont + math.sqrt(cfg.dim) / n, 1e-6)
                )

            if case == 0 and n >= 4:
                sched = choose_constants(0.1, delta, shape)
                _, rep_glue = build_regularized_path(rho0, rho1, rep_log.path, sched)
                rows.append(
                    _row("suite", "glued-path-budget", params, rep_glue.total_measured,
                         rep_log.objective + sched.eps**2, 2 * cfg.tol)
                )
                rows.append(
                    _row("suite", "glued-floor", params, sched.delta_bar,
                         rep_glue.min_density, 1e-12)
                )
                rows.append(
                    _row("suite", "glued-lipschitz", params, rep_glue.lip_max,
                         max(1.0 / delta, sched.heat_lip_cap), 1e-9)
                )
                rows.append(
                    _row("suite", "glued-residual", params, rep_glue.residual, 1e-8)
                )
    return rows


def _kinetic_bound(mu: ContinuumDensity, vf: ContinuumField, shape: GridShape) -> float:
    """Continuum kinetic energy plus the 1/N projection penalty terms."""
    dim = mu.dim
    grid_n = 4096 if dim == 1 else 128
    grids = np.meshgrid(*[np.arange(grid_n) / grid_n] * dim, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    dens = mu.evaluate(pts)
    vals = np.stack([c.evaluate(pts) for c in vf.components], axis=0)
    kinetic = float(np.mean(np.sum(vals**2, axis=0) / dens))
    v_inf = float(np.max(np.sqrt(np.sum(vals**2, axis=0))))
    lip_v = max(c.lipschitz_estimate() for c in vf.components)
    lip_rho = mu.poly.lipschitz_estimate()
    min_rho = float(np.min(dens))
    penalty = (v_inf * lip_v / min_rho + (1.0 + lip_rho) ** 2 * v_inf**2 / min_rho**3) / shape.side
    return kinetic + penalty


# ---------------------------------------------------------------------------
# convergence experiment
# ---------------------------------------------------------------------------


def run_convergence(cfg: ExperimentConfig, mu0: ContinuumDensity = None,
                    mu1: ContinuumDensity = None):
    """Distance of the smoothed-projected pair to its continuum limit, for
    each lattice size (defaults to the canonical rotation pair)."""
    if (mu0 is None) != (mu1 is None):
        raise ValueError("provide both densities or neither")
    if mu0 is None:
        mu0, mu1 = canonical_pair()
    if mu0.dim != 1 or mu1.dim != 1:
        raise ValueError("the convergence experiment requires dim 1")
    s = cfg.s_list[0]
    w2 = circle_w2(mu0, mu1, m=100_000)
    sm0, sm1 = heat_continuous(s, mu0), heat_continuous(s, mu1)
    w2_smoothed = circle_w2(sm0, sm1, m=100_000)
    rows = [
        _info_row("converge", "wasserstein-value", {"s": s}, w2),
        _info_row("converge", "heat-smoothed-target", {"s": s}, w2_smoothed),
    ]
    errs = {}
    for n in cfg.n_list:
        shape = GridShape(cfg.dim, n)
        r0 = project_density(sm0, shape)
        r1 = project_density(sm1, shape)
        opts = SolverOptions(tsteps=cfg.tsteps, tol=1e-6, refine=True, max_tsteps=64)
        rep = solve_distance(r0, r1, opts)
        rep_h = solve_distance(r0, r1, SolverOptions(
            tsteps=cfg.tsteps, kind=MeanKind.HARMONIC, tol=1e-6, refine=True, max_tsteps=64))
        w2n, _ = w2n_exact(r0, r1)
        err = abs(rep.value - w2)
        errs[n] = err
        params = {"n": n, "s": s}
        rows.append(_info_row("converge", "metric-value", params, rep.value))
        rows.append(_info_row("converge", "harmonic-metric-value", params, rep_h.value))
        rows.append(_info_row("converge", "wasserstein-lattice-value", params, w2n))
        rows.append(_info_row("converge", "convergence-error", params, err))
    n_lo, n_hi = min(cfg.n_list), max(cfg.n_list)
    rows.append(
        _row("converge", "convergence-monotone", {"n_lo": n_lo, "n_hi": n_hi},
             errs[n_hi], errs[n_lo])
    )
    rows.append(
        _row("converge", "convergence-threshold", {"n": n_hi, "s": s},
             errs[n_hi], 0.05 * w2)
    )
    return rows


# ---------------------------------------------------------------------------
# almost-isometry / almost-surjectivity measurements
# ---------------------------------------------------------------------------


def run_gh_maps(cfg: ExperimentConfig):
    """Defect measurements for the smooth-then-project map at each ``(s, n)``
    pair (``s_list`` and ``n_list`` are zipped)."""
    if cfg.dim != 1:
        raise ValueError("the map experiments require dim 1")
    rng = np.random.default_rng(cfg.seed)
    rows = []
    surj_means = []
    iso_means = []
    for s, n in zip(cfg.s_list, cfg.n_list):
        shape = GridShape(1, n)
        params = {"n": n, "s": s}
        max_freq = min(int(math.ceil(math.sqrt(40.0 / (4.0 * math.pi**2 * s)))) + 4, 4 * n)
        surj = []
        for case in range(cfg.cases):
            rho = random_density(shape, rng)
            lifted = lift_density(rho)
            smoothed = heat_continuous(s, lifted.fourier(max_freq))
            back = project_density(smoothed, shape)
            rep = solve_distance(rho, back, SolverOptions(tsteps=cfg.tsteps, tol=1e-6,
                                                          refine=True, max_tsteps=64))
            w2_gap = circle_w2(lifted.quantile_rep(50_000), smoothed, m=50_000)
            chain = METRIC_COMPARISON_CONSTANT * math.sqrt(1.0) * (w2_gap + 2.0 / n) + cfg.tol
            surj.append(rep.value)
            rows.append(
                _row("ghmaps", "surjectivity-defect", {**params, "case": case},
                     rep.value, chain)
            )
        iso = []
        for case in range(max(2, cfg.cases // 2)):
            mu0 = random_trig_density(1, rng)
            mu1 = random_trig_density(1, rng)
            w2 = circle_w2(mu0, mu1, m=50_000)
            sm0, sm1 = heat_continuous(s, mu0), heat_continuous(s, mu1)
            rep = solve_distance(
                project_density(sm0, shape), project_density(sm1, shape),
                SolverOptions(tsteps=cfg.tsteps, tol=1e-6, refine=True, max_tsteps=64))
            iso.append(abs(rep.value - w2))
            rows.append(
                _info_row("ghmaps", "isometry-defect", {**params, "case": case}, iso[-1])
            )
        surj_means.append(float(np.mean(surj)))
        iso_means.append(float(np.mean(iso)))
    for name, means in (("surjectivity-trend", surj_means), ("isometry-trend", iso_means)):
        ok = all(means[i + 1] <= means[i] * 1.1 for i in range(len(means) - 1))
        rows.append(
            ResultRow("ghmaps", name, {"pairs": len(means)}, means[-1], means[0],
                      means[0] - means[-1], ok)
        )
    return rows
