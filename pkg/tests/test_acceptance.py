"""Acceptance gate: one test per release criterion, each printing a single
PASS/FAIL line with its measured quantities and elapsed time.

Criterion 8's two convergence sub-checks compare the lattice metric of the
*heat-smoothed* pair against the *unsmoothed* continuum distance; the
smoothing bias does not vanish as the lattice refines (the lattice values
converge to the smoothed pair's distance instead), so those two checks fail
by construction.  They are asserted exactly as specified and left red; the
measured values and the smoothed-target diagnostic are printed alongside.
"""

import time

import numpy as np
import pytest
import scipy.linalg

from torusot import _kernels
from torusot.continuum import circle_w2
from torusot.experiments import (
    ExperimentConfig,
    canonical_pair,
    random_density,
    random_regular_density,
    run_convergence,
    run_gh_maps,
    run_inequality_suite,
)
from torusot.fields import (
    Density,
    MomentumField,
    action,
    continuity_residual,
    dirichlet_form,
    divergence,
    l2_inner,
    lifted_weak_residual,
    lipschitz_constant,
    project_momentum,
    TransportPath,
)
from torusot.grid import GridShape, neighbor_tables
from torusot.heat import (
    heat_apply,
    heat_apply_momentum,
    kappa_constant,
    laplacian,
    laplacian_solve,
    poincare_constant,
    spectral_gap,
)
from torusot.means import MeanKind, mean, mean_partials
from torusot.oracle import oracle_distance
from torusot.regpaths import build_regularized_path, choose_constants
from torusot.solver import SolverOptions, _ReducedProblem, path_action, solve_distance

LOG = MeanKind.LOGARITHMIC
HARM = MeanKind.HARMONIC

# quantile-oracle value for the canonical pair, frozen after the first
# verified run (resolution 1e5, golden-section offset search)
CANONICAL_W2 = 0.0901327409


def _report(num, name, ok, detail, elapsed, budget):
    status = "PASS" if ok else "FAIL"
    print(
        f"\nCRITERION {num} ({name}): {status} — {detail}; "
        f"elapsed {elapsed:.1f}s (budget {budget:.0f}s)"
    )


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    """Compile the jitted kernels outside the timed regions."""
    shape = GridShape(1, 4)
    fwd, bwd = neighbor_tables(shape)
    rho = np.ones(4)
    v = np.zeros((1, 1, 4))
    mean(LOG, np.array([1.0, 2.0]), np.array([2.0, 1.0]))
    mean_partials(LOG, np.array([1.0]), np.array([2.0]))
    mean(HARM, 1.0, 2.0)
    _kernels.path_action_grad(np.ones((2, 4)), v, fwd, False)
    _kernels.floor_barrier(np.ones((1, 4)), 0.0)
    _kernels.lip_barrier(np.ones((1, 4)), np.arange(4)[:, None], 4, 10.0)
    _kernels.divergence_sum(np.zeros((1, 4)), bwd)
    _kernels.lipschitz_scan(rho, np.arange(4)[:, None], 4)
    rho_d = Density.uniform(GridShape(1, 3))
    oracle_distance(rho_d, rho_d, t_levels=(8,), max_iter=5)
    solve_distance(rho_d, rho_d, SolverOptions(tsteps=2, refine=False, max_iter=5))


def test_criterion_1_mean_kernels():
    budget = 1.0
    rng = np.random.default_rng(1)
    a = 10.0 ** rng.uniform(-6, 6, size=10_000)
    b = 10.0 ** rng.uniform(-6, 6, size=10_000)
    lam = 10.0 ** rng.uniform(-3, 3, size=10_000)
    t0 = time.perf_counter()
    harm = mean(HARM, a, b)
    logm = mean(LOG, a, b)
    checks = {
        "diagonal": np.max(np.abs(mean(LOG, a, a) - a) / a) < 1e-12,
        "sandwich_low": np.all(harm <= logm * (1 + 1e-12)),
        "sandwich_high": np.all(logm <= 0.5 * (a + b) * (1 + 1e-12)),
        "homogeneity": np.max(
            np.abs(mean(LOG, lam * a, lam * b) - lam * logm) / (lam * logm)
        )
        < 1e-12,
        "gap_inequality": np.all(
            1.0 / harm - 1.0 / logm
            <= (b - a) ** 2 / (a * b) / harm * (1 + 1e-12) + 1e-12
        ),
    }
    # near-diagonal branch agreement at the series/quotient crossover
    cut = _kernels.LOG_MEAN_SERIES_CUT
    base = 10.0 ** rng.uniform(-6, 6, size=1000)
    for u in (0.999 * cut, 1.001 * cut):
        lo, hi = base * (1 - u), base * (1 + u)
        ref = (hi - lo) / np.log1p((hi - lo) / lo)
        checks[f"crossover_{u:.1e}"] = (
            np.max(np.abs(mean(LOG, lo, hi) - ref) / ref) < 1e-12
        )
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < budget
    _report(1, "mean kernels", ok, f"{sum(checks.values())}/{len(checks)} checks", elapsed, budget)
    assert all(checks.values()), checks
    assert elapsed < budget


def test_criterion_2_spectral_correctness():
    budget = 5.0
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst_eigen = 0.0
    for side in range(4, 17):
        shape = GridShape(1, side)
        arange = np.arange(side)
        for ell in range(side):
            v = np.exp(2j * np.pi * ell * arange / side)
            lam = 2.0 * side**2 * (1.0 - np.cos(2.0 * np.pi * ell / side))
            err = np.max(np.abs(laplacian(shape, v) + lam * v)) / max(lam, 1.0)
            worst_eigen = max(worst_eigen, err)
    poincare_exact = poincare_constant(GridShape(1, 4)) == 1.0 / 32.0
    poincare_ok = True
    for side in (4, 8, 16):
        shape = GridShape(1, side)
        const = poincare_constant(shape)
        for _ in range(100):
            f = rng.normal(size=side)
            f -= f.mean()
            poincare_ok &= l2_inner(shape, f, f) <= const * dirichlet_form(shape, f) + 1e-10
            pot = laplacian_solve(shape, f)
            poincare_ok &= dirichlet_form(shape, pot) <= const * l2_inner(shape, f, f) + 1e-10
    n = np.arange(4, 10_001, dtype=np.float64)
    gaps = 4.0 * n**2 * np.sin(np.pi / n) ** 2
    kappa_ok = kappa_constant() == 32.0 and abs(gaps.min() - 32.0) < 1e-9
    elapsed = time.perf_counter() - t0
    ok = worst_eigen < 1e-10 and poincare_exact and poincare_ok and kappa_ok and elapsed < budget
    _report(
        2, "spectral correctness", ok,
        f"eigen err {worst_eigen:.2e}, gap min {gaps.min():.6f}", elapsed, budget,
    )
    assert worst_eigen < 1e-10
    assert poincare_exact and poincare_ok and kappa_ok
    assert elapsed < budget


def test_criterion_3_heat_semigroup():
    budget = 10.0
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    mass_ok = semi_ok = True
    for shape in (GridShape(1, 8), GridShape(2, 4)):
        for _ in range(10):
            rho = random_density(shape, rng)
            out = heat_apply(shape, 0.05, rho)
            mass_ok &= abs(out.values.sum() - shape.n_sites) <= 1e-12 * shape.n_sites
            f = rng.normal(size=shape.n_sites)
            two = heat_apply(shape, 0.04, heat_apply(shape, 0.03, f))
            semi_ok &= np.max(np.abs(two - heat_apply(shape, 0.07, f))) < 1e-10
    expm_worst = 0.0
    for shape in (GridShape(1, 8), GridShape(2, 4), GridShape(2, 8)):
        m = shape.n_sites
        mat = np.zeros((m, m))
        for j in range(m):
            e = np.zeros(m)
            e[j] = 1.0
            mat[:, j] = laplacian(shape, e)
        t_heat = 0.011
        dense = scipy.linalg.expm(t_heat * mat)
        f = rng.normal(size=m)
        expm_worst = max(
            expm_worst, float(np.max(np.abs(heat_apply(shape, t_heat, f) - dense @ f)))
        )
    mono_ok = True
    shape = GridShape(1, 8)
    for _ in range(100):
        rho = random_density(shape, rng)
        v = MomentumField(shape, rng.normal(size=(1, 8)))
        s = 10.0 ** rng.uniform(-3, 0)
        after = action(
            heat_apply(shape, s, rho),
            MomentumField(shape, heat_apply_momentum(shape, s, v.values)),
        )
        mono_ok &= after <= action(rho, v) + 1e-10
        mono_ok &= (
            lipschitz_constant(shape, heat_apply(shape, s, rho).values)
            <= lipschitz_constant(shape, rho.values) * (1 + 1e-12) + 1e-12
        )
    elapsed = time.perf_counter() - t0
    ok = mass_ok and semi_ok and expm_worst < 1e-8 and mono_ok and elapsed < budget
    _report(3, "heat semigroup", ok, f"expm err {expm_worst:.2e}", elapsed, budget)
    assert mass_ok and semi_ok and mono_ok
    assert expm_worst < 1e-8
    assert elapsed < budget


def test_criterion_4_solver_vs_oracle():
    budget = 300.0
    tol = 1e-6
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = {LOG: 0.0, HARM: 0.0}
    instances = []
    for side, count in ((3, 10), (5, 5)):
        shape = GridShape(1, side)
        for _ in range(count):
            instances.append(
                (random_density(shape, rng, 0.6), random_density(shape, rng, 0.6))
            )
    for kind in (LOG, HARM):
        for r0, r1 in instances:
            rep = solve_distance(
                r0, r1, SolverOptions(tsteps=16, kind=kind, tol=tol, max_tsteps=128)
            )
            ref = oracle_distance(r0, r1, kind=kind)
            worst[kind] = max(worst[kind], abs(rep.value - ref) / max(ref, 1e-12))
    agree_ok = worst[LOG] < 1e-3 and worst[HARM] < 1e-3

    sym_worst = 0.0
    for r0, r1 in instances[:3]:
        opts = SolverOptions(tsteps=16, tol=tol, refine=False)
        sym_worst = max(
            sym_worst,
            abs(solve_distance(r0, r1, opts).value - solve_distance(r1, r0, opts).value),
        )
    sym_ok = sym_worst <= 2 * tol + 1e-9

    shape3 = GridShape(1, 3)
    tri_ok = True
    for _ in range(3):
        triple = [random_density(shape3, rng, 0.6) for _ in range(3)]
        opts = SolverOptions(tsteps=32, tol=tol, refine=False)
        d01 = solve_distance(triple[0], triple[1], opts).value
        d12 = solve_distance(triple[1], triple[2], opts).value
        d02 = solve_distance(triple[0], triple[2], opts).value
        tri_ok &= d02 <= d01 + d12 + 3 * tol + 1e-9

    grad_worst = 0.0
    prob = _ReducedProblem(GridShape(1, 5), *(
        (random_density(GridShape(1, 5), rng).values,
         random_density(GridShape(1, 5), rng).values)
    ), 6, LOG, None)
    x = np.concatenate([
        np.abs(rng.normal(1.0, 0.2, size=prob.n_interior)),
        rng.normal(0, 0.5, size=6 * prob.k_div),
    ])
    _, g = prob.objective_grad(x, 1e-4)
    for i in rng.choice(x.size, size=12, replace=False):
        h = 1e-6
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp, _ = prob.objective_grad(xp, 1e-4)
        fm, _ = prob.objective_grad(xm, 1e-4)
        fd = (fp - fm) / (2 * h)
        grad_worst = max(grad_worst, abs(g[i] - fd) / max(abs(fd), 1e-9))
    grad_ok = grad_worst < 1e-5

    elapsed = time.perf_counter() - t0
    ok = agree_ok and sym_ok and tri_ok and grad_ok and elapsed < budget
    _report(
        4, "solver vs oracle", ok,
        f"rel gap log {worst[LOG]:.2e} harm {worst[HARM]:.2e}, grad {grad_worst:.2e}",
        elapsed, budget,
    )
    assert agree_ok, worst
    assert sym_ok and tri_ok and grad_ok
    assert elapsed < budget


def test_criterion_5_inequality_suite():
    budget = 900.0
    t0 = time.perf_counter()
    failures = []
    counts = []
    for dim, side in ((1, 8), (2, 4)):
        cfg = ExperimentConfig(dim=dim, n_list=[side], cases=20, seed=42, tol=1e-3)
        rows = run_inequality_suite(cfg)
        counts.append(len(rows))
        failures.extend(
            (dim, side, r.anchor, r.params, r.measured, r.bound)
            for r in rows
            if not r.passed
        )
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < budget
    _report(
        5, "inequality suite", ok,
        f"{sum(counts)} rows, {len(failures)} failures", elapsed, budget,
    )
    assert not failures, failures[:5]
    assert elapsed < budget


def test_criterion_6_projection_exactness():
    budget = 10.0
    from torusot.continuum import ContinuumField, TrigPoly, cube_integrals
    from torusot.continuum import default_test_modes

    t0 = time.perf_counter()
    inst_worst = 0.0
    for dim, side in ((1, 8), (2, 4)):
        shape = GridShape(dim, side)
        for t in np.linspace(0.0, 1.0, 9):
            phase = np.exp(-2j * np.pi * t)
            k = (1,) + (0,) * (dim - 1)
            field = ContinuumField.from_modes(
                dim, [{k: -0.25j * phase}] + [{} for _ in range(dim - 1)]
            )
            drho = TrigPoly.from_modes(dim, {k: 2j * np.pi * 0.25j * phase})
            rate = shape.n_sites * cube_integrals(drho, shape)
            div = divergence(project_momentum(field, shape))
            inst_worst = max(inst_worst, float(np.max(np.abs(rate + div))))

    rng = np.random.default_rng(6)
    weak_worst = 0.0
    for dim, side in ((1, 8), (2, 3)):
        shape = GridShape(dim, side)
        r0 = random_density(shape, rng)
        r1 = random_density(shape, rng)
        tsteps = 16
        frac = np.linspace(0, 1, tsteps + 1)[:, None]
        nodes = (1 - frac) * r0.values[None] + frac * r1.values[None]
        pot = laplacian_solve(shape, -(r1.values - r0.values))
        fwd, _ = neighbor_tables(shape)
        v = np.empty((dim, shape.n_sites))
        for i in range(dim):
            v[i] = 2 * dim * side**2 * (pot[fwd[i]] - pot)
        path = TransportPath(shape, nodes, np.broadcast_to(v, (tsteps,) + v.shape).copy())
        phis, tmodes = default_test_modes(dim)
        assert len(phis) * len(tmodes) == 16
        weak_worst = max(weak_worst, lifted_weak_residual(path, phis, tmodes))
    elapsed = time.perf_counter() - t0
    ok = inst_worst < 1e-10 and weak_worst < 1e-8 and elapsed < budget
    _report(
        6, "projection exactness", ok,
        f"instantaneous {inst_worst:.2e}, weak {weak_worst:.2e}", elapsed, budget,
    )
    assert inst_worst < 1e-10
    assert weak_worst < 1e-8
    assert elapsed < budget


def test_criterion_7_regularization_paths():
    budget = 300.0
    tol = 1e-6
    delta = 0.5
    shape = GridShape(1, 8)
    rng = np.random.default_rng(42)
    t0 = time.perf_counter()
    r0 = random_regular_density(shape, delta, rng)
    r1 = random_regular_density(shape, delta, rng)
    base = solve_distance(r0, r1, SolverOptions(tsteps=16, tol=tol, refine=False))
    sched = choose_constants(0.1, delta, shape)
    kappa = kappa_constant()

    from torusot.regpaths import step1_linear_path, step2_heat_path

    checks = {}
    seg1 = step1_linear_path(r0, sched.a, samples=32)
    checks["step1"] = path_action(seg1) <= sched.a * 1 / (kappa**2 * delta**2) + 1e-9
    mixed = Density(shape, r0.values + sched.a * (1 - r0.values))
    seg2 = step2_heat_path(mixed, sched.b, samples=32)
    checks["step2"] = path_action(seg2) <= 1 * sched.b**2 / delta**3 + 1e-9

    glued, report = build_regularized_path(r0, r1, base.path, sched)
    middle = next(s for s in report.segment_bounds if s.name == "middle")
    checks["middle"] = middle.measured <= middle.bound + 1e-9
    checks["total"] = report.total_measured <= base.objective + sched.eps**2 + 2 * tol
    checks["floor"] = report.min_density >= sched.delta_bar - 1e-12
    checks["lipschitz"] = report.lip_max <= max(1 / delta, sched.heat_lip_cap) + 1e-9
    checks["residual"] = report.residual <= 1e-8
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < budget
    _report(
        7, "regularization paths", ok,
        f"total {report.total_measured:.3e} vs budget "
        f"{base.objective + sched.eps**2:.3e}, residual {report.residual:.1e}",
        elapsed, budget,
    )
    assert all(checks.values()), checks
    assert elapsed < budget


def test_criterion_8_gh_convergence():
    budget = 1800.0
    t0 = time.perf_counter()
    mu0, mu1 = canonical_pair()
    w2 = circle_w2(mu0, mu1, m=100_000)
    fixture_ok = abs(w2 - CANONICAL_W2) < 1e-6

    cfg = ExperimentConfig(
        experiment="converge", dim=1, n_list=[4, 8, 16, 32], s_list=[0.02], tsteps=16
    )
    rows = run_convergence(cfg)
    errs = {
        r.params["n"]: r.measured for r in rows if r.anchor == "convergence-error"
    }
    smoothed = next(r.measured for r in rows if r.anchor == "heat-smoothed-target")
    metric32 = next(
        r.measured for r in rows if r.anchor == "metric-value" and r.params["n"] == 32
    )
    monotone_ok = errs[32] < errs[4]
    threshold_ok = errs[32] <= 0.05 * w2

    gh_cfg = ExperimentConfig(
        experiment="ghmaps", dim=1, n_list=[5, 10, 20],
        s_list=[0.04, 0.01, 0.0025], tsteps=16, cases=3, tol=1e-3,
    )
    gh_rows = run_gh_maps(gh_cfg)
    surj_ok = all(r.passed for r in gh_rows if r.anchor == "surjectivity-defect")

    elapsed = time.perf_counter() - t0
    ok = fixture_ok and monotone_ok and threshold_ok and surj_ok and elapsed < budget
    _report(
        8, "metric convergence experiment", ok,
        f"err(4)={errs[4]:.6f} err(32)={errs[32]:.6f} target 0.05*W2={0.05*w2:.6f}; "
        f"lattice value at 32 = {metric32:.6f} vs smoothed-pair distance {smoothed:.6f} "
        f"(the smoothing bias dominates err; see the analysis note in the module docstring); "
        f"surjectivity chain bounds {'hold' if surj_ok else 'violated'}",
        elapsed, budget,
    )
    assert fixture_ok
    assert surj_ok
    assert elapsed < budget
    # The two sub-checks below compare against the unsmoothed continuum
    # distance at fixed smoothing s = 0.02; the measured lattice values
    # converge to the smoothed pair's distance, leaving a bias of ~0.049
    # (54% of W2), an order of magnitude above the 5% threshold.  Asserted
    # as specified; expected to fail.
    assert monotone_ok, (
        f"err(32)={errs[32]:.6f} is not below err(4)={errs[4]:.6f}: the error is "
        f"dominated by the fixed smoothing bias |W2(smoothed pair) - W2| = "
        f"{abs(smoothed - w2):.6f}, which the lattice refinement cannot reduce"
    )
    assert threshold_ok, (
        f"err(32)={errs[32]:.6f} exceeds 0.05*W2={0.05 * w2:.6f}; the lattice "
        f"metric converges to the smoothed-pair distance {smoothed:.6f}, not to "
        f"W2={w2:.6f}, so the threshold is unreachable at s=0.02"
    )
