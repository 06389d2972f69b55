import numpy as np
import pytest
import scipy.linalg

from torusot.fields import Density, MomentumField, action, divergence, l2_inner, lipschitz_constant
from torusot.grid import GridShape
from torusot.heat import (
    HeatDiagnostics,
    heat_apply,
    heat_apply_momentum,
    heat_kernel,
    kappa_constant,
    laplacian,
    laplacian_solve,
    poincare_constant,
    spectral_gap,
)
from torusot.means import MeanKind


def gap_formula(n):
    return 2.0 * n**2 * (1.0 - np.cos(2.0 * np.pi / n))


def random_density(shape, rng):
    vals = np.exp(rng.normal(0, 0.5, size=shape.n_sites))
    vals *= shape.n_sites / vals.sum()
    return Density(shape, vals)


# ---------------------------------------------------------------------------
# Laplacian and eigenstructure
# ---------------------------------------------------------------------------


def test_laplacian_constant_and_mass():
    shape = GridShape(2, 4)
    assert np.allclose(laplacian(shape, np.full(16, 2.0)), 0.0)
    f = np.random.default_rng(0).normal(size=16)
    assert np.sum(laplacian(shape, f)) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("side", range(4, 17))
def test_eigenrelation_1d(side):
    shape = GridShape(1, side)
    a = np.arange(side)
    for ell in range(side):
        v = np.exp(2j * np.pi * ell * a / side)
        lam = 2.0 * side**2 * (1.0 - np.cos(2.0 * np.pi * ell / side))
        assert np.max(np.abs(laplacian(shape, v) + lam * v)) < 1e-10 * max(lam, 1.0)


def test_eigenvalue_example_n4():
    assert spectral_gap(GridShape(1, 4)) == 32.0


def test_laplacian_solve_examples():
    shape = GridShape(1, 5)
    assert np.allclose(laplacian_solve(shape, np.zeros(5)), 0.0)
    a = np.arange(5)
    v1 = np.exp(2j * np.pi * a / 5)
    lam1 = spectral_gap(shape)
    sol = laplacian_solve(shape, -lam1 * v1)
    assert np.max(np.abs(sol - v1)) < 1e-10
    with pytest.raises(ValueError):
        laplacian_solve(shape, np.ones(5))


def test_laplacian_solve_roundtrip_and_zero_mean():
    rng = np.random.default_rng(1)
    for shape in (GridShape(1, 8), GridShape(2, 4)):
        g = rng.normal(size=shape.n_sites)
        g -= g.mean()
        f = laplacian_solve(shape, g)
        assert np.mean(f) == pytest.approx(0.0, abs=1e-12)
        back = laplacian(shape, f)
        assert np.max(np.abs(back - g)) < 1e-10 * max(1.0, np.max(np.abs(g)))


# ---------------------------------------------------------------------------
# spectral-gap inequalities
# ---------------------------------------------------------------------------


def test_poincare_constant_values():
    assert poincare_constant(GridShape(1, 4)) == 1.0 / 32.0
    with pytest.raises(ValueError):
        poincare_constant(GridShape(1, 3))


def test_gap_limit_matches_continuum():
    # 2 N^2 (1 - cos(2 pi / N)) -> 4 pi^2
    assert gap_formula(10_000) == pytest.approx(4 * np.pi**2, rel=1e-6)


def test_kappa_scan():
    n = np.arange(4, 10_001, dtype=np.float64)
    # 1 - cos(2 pi / n) evaluated as 2 sin^2(pi / n) to avoid cancellation
    gaps = 4.0 * n**2 * np.sin(np.pi / n) ** 2
    assert kappa_constant() == 32.0
    assert np.min(gaps) >= kappa_constant() - 1e-9
    assert gaps[0] == pytest.approx(32.0, abs=1e-9)
    assert np.all(np.diff(gaps) > 0)
    assert gaps[-1] < 4 * np.pi**2


@pytest.mark.parametrize("shape", [GridShape(1, 8), GridShape(1, 4), GridShape(2, 4)])
def test_poincare_inequalities_random(shape):
    from torusot.fields import dirichlet_form

    rng = np.random.default_rng(2)
    const = poincare_constant(shape)
    for _ in range(100):
        f = rng.normal(size=shape.n_sites)
        f -= f.mean()
        assert l2_inner(shape, f, f) <= const * dirichlet_form(shape, f) + 1e-10
        pot = laplacian_solve(shape, f)
        assert dirichlet_form(shape, pot) <= const * l2_inner(shape, f, f) + 1e-10


def test_poincare_equality_case():
    from torusot.fields import dirichlet_form

    shape = GridShape(1, 8)
    f = np.cos(2 * np.pi * np.arange(8) / 8)
    lhs = l2_inner(shape, f, f)
    rhs = poincare_constant(shape) * dirichlet_form(shape, f)
    assert lhs == pytest.approx(rhs, rel=1e-10)


# ---------------------------------------------------------------------------
# heat semigroup on site functions and densities
# ---------------------------------------------------------------------------


def test_heat_identity_at_zero():
    shape = GridShape(1, 6)
    f = np.random.default_rng(3).normal(size=6)
    out = heat_apply(shape, 0.0, f)
    assert np.array_equal(out, f)
    rho = Density(shape, np.ones(6))
    assert np.array_equal(heat_apply(shape, 0.0, rho).values, rho.values)


def test_heat_uniform_fixed_point():
    shape = GridShape(2, 4)
    rho = Density.uniform(shape)
    out = heat_apply(shape, 0.37, rho)
    assert np.allclose(out.values, 1.0, atol=1e-13)


def test_heat_eigen_decay():
    shape = GridShape(1, 4)
    v1 = np.exp(2j * np.pi * np.arange(4) / 4)
    t = 0.01
    out = heat_apply(shape, t, v1)
    assert np.max(np.abs(out - np.exp(-32.0 * t) * v1)) < 1e-12


def test_heat_mass_and_positivity():
    rng = np.random.default_rng(4)
    shape = GridShape(2, 4)
    diag = HeatDiagnostics()
    for _ in range(20):
        rho = random_density(shape, rng)
        out = heat_apply(shape, 0.05, rho, diagnostics=diag)
        assert out.values.sum() == pytest.approx(shape.n_sites, rel=1e-12)
        assert out.values.min() >= 0.0
    assert diag.min_before_clamp >= -1e-12


def test_heat_semigroup_property():
    rng = np.random.default_rng(5)
    for shape in (GridShape(1, 8), GridShape(2, 4)):
        f = rng.normal(size=shape.n_sites)
        one = heat_apply(shape, 0.07, heat_apply(shape, 0.03, f))
        two = heat_apply(shape, 0.1, f)
        assert np.max(np.abs(one - two)) < 1e-10


def test_heat_rejects_negative_time():
    with pytest.raises(ValueError):
        heat_apply(GridShape(1, 4), -0.1, np.ones(4))
    with pytest.raises(ValueError):
        heat_apply_momentum(GridShape(1, 4), -0.1, np.ones((1, 4)))


@pytest.mark.parametrize("shape", [GridShape(1, 8), GridShape(2, 3)])
def test_heat_matches_dense_matrix_exponential(shape):
    m = shape.n_sites
    mat = np.zeros((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        mat[:, j] = laplacian(shape, e)
    t = 0.013
    expm = scipy.linalg.expm(t * mat)
    rng = np.random.default_rng(6)
    f = rng.normal(size=m)
    assert np.max(np.abs(heat_apply(shape, t, f) - expm @ f)) < 1e-8


# ---------------------------------------------------------------------------
# heat on momentum fields
# ---------------------------------------------------------------------------


def test_heat_momentum_identity_and_constant():
    shape = GridShape(2, 4)
    v = np.random.default_rng(7).normal(size=(2, 16))
    assert np.array_equal(heat_apply_momentum(shape, 0.0, v), v)
    c = np.full((2, 16), 3.3)
    assert np.allclose(heat_apply_momentum(shape, 0.4, c), c, atol=1e-12)


def test_heat_momentum_commutes_with_divergence():
    rng = np.random.default_rng(8)
    for shape in (GridShape(1, 8), GridShape(2, 4)):
        v = rng.normal(size=(shape.dim, shape.n_sites))
        t = 0.05
        lhs = divergence(MomentumField(shape, heat_apply_momentum(shape, t, v)))
        rhs = heat_apply(shape, t, divergence(MomentumField(shape, v)))
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_heat_action_monotone():
    rng = np.random.default_rng(9)
    shape = GridShape(1, 8)
    for _ in range(100):
        rho = random_density(shape, rng)
        v = MomentumField(shape, rng.normal(size=(1, 8)))
        s = 10.0 ** rng.uniform(-3, 0)
        before = action(rho, v, MeanKind.LOGARITHMIC)
        after = action(
            heat_apply(shape, s, rho),
            MomentumField(shape, heat_apply_momentum(shape, s, v.values)),
            MeanKind.LOGARITHMIC,
        )
        assert after <= before + 1e-10


def test_heat_lipschitz_monotone():
    rng = np.random.default_rng(10)
    shape = GridShape(1, 8)
    for s in (0.01, 0.1, 1.0):
        for _ in range(30):
            rho = random_density(shape, rng)
            lip_before = lipschitz_constant(shape, rho.values)
            lip_after = lipschitz_constant(shape, heat_apply(shape, s, rho).values)
            assert lip_after <= lip_before * (1 + 1e-12) + 1e-12


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def test_kernel_symmetry_and_tensorisation():
    shape = GridShape(1, 8)
    kern = heat_kernel(shape, 0.03)
    assert np.max(np.abs(kern - kern[(-np.arange(8)) % 8])) < 1e-12
    shape2 = GridShape(2, 8)
    kern2 = heat_kernel(shape2, 0.03).reshape(8, 8)
    assert np.max(np.abs(kern2 - np.outer(kern, kern) / 8**0)) < 1e-9 * kern2.max()


def test_kernel_convolution_formula():
    shape = GridShape(1, 6)
    rng = np.random.default_rng(11)
    f = rng.normal(size=6)
    t = 0.02
    kern = heat_kernel(shape, t)
    direct = heat_apply(shape, t, f)
    conv = np.array(
        [np.sum(kern[(a - np.arange(6)) % 6] * f) / 6 for a in range(6)]
    )
    assert np.max(np.abs(direct - conv)) < 1e-12


def test_kernel_bounds_stabilise_over_sides():
    s = 0.05
    sup_vals = {}
    lip_vals = {}
    for n in (4, 8, 16, 32, 64):
        shape = GridShape(1, n)
        kern = heat_kernel(shape, s)
        sup_vals[n] = float(np.max(np.abs(kern)))
        lip_vals[n] = lipschitz_constant(shape, kern)
    assert abs(sup_vals[64] - sup_vals[32]) < 0.05 * sup_vals[64]
    assert abs(lip_vals[64] - lip_vals[32]) < 0.05 * lip_vals[64]
