"""The numba kernels and their pure-numpy fallbacks must agree exactly, and
the package must work end to end with numba disabled via the environment
flag."""

import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from torusot import _kernels
from torusot._accel import NUMBA_ENABLED
from torusot.grid import GridShape, coords_table, neighbor_tables

pytestmark = pytest.mark.skipif(
    not NUMBA_ENABLED, reason="fallback comparison needs the numba path active"
)


@pytest.fixture(scope="module")
def instance():
    rng = np.random.default_rng(0)
    shape = GridShape(2, 4)
    fwd, bwd = neighbor_tables(shape)
    nodes = np.abs(rng.normal(1.0, 0.3, size=(9, 16))) + 0.1
    v = rng.normal(size=(8, 2, 16))
    return shape, fwd, bwd, nodes, v, rng


def test_mean_kernels_agree(instance):
    *_, rng = instance
    a = 10.0 ** rng.uniform(-6, 6, size=3000)
    b = 10.0 ** rng.uniform(-6, 6, size=3000)
    for harm in (False, True):
        # libm vs numpy log implementations may differ in the last ulp
        assert np.allclose(
            _kernels._mean_arrays_numba(a, b, harm),
            _kernels._mean_arrays_numpy(a, b, harm),
            rtol=1e-14,
            atol=0,
        )
        da1, db1 = _kernels._mean_partials_arrays_numba(a, b, harm)
        da2, db2 = _kernels._mean_partials_arrays_numpy(a, b, harm)
        assert np.allclose(da1, da2, rtol=1e-13, atol=0)
        assert np.allclose(db1, db2, rtol=1e-13, atol=0)


def test_path_kernels_agree(instance):
    shape, fwd, bwd, nodes, v, _ = instance
    for harm in (False, True):
        t1, gn1, gv1 = _kernels._path_action_grad_numba(nodes, v, fwd, harm)
        t2, gn2, gv2 = _kernels._path_action_grad_numpy(nodes, v, fwd, harm)
        assert t1 == pytest.approx(t2, rel=1e-12)
        assert np.allclose(gn1, gn2, rtol=1e-11, atol=1e-13)
        assert np.allclose(gv1, gv2, rtol=1e-12, atol=1e-14)


def test_scan_kernels_agree(instance):
    shape, fwd, bwd, nodes, v, rng = instance
    f = rng.normal(size=16)
    coords = coords_table(shape)
    assert _kernels._lipschitz_numba(f, coords, 4) == pytest.approx(
        _kernels._lipschitz_numpy(f, coords, 4), rel=1e-13
    )
    assert np.allclose(
        _kernels._divergence_numba(v[0], bwd), _kernels._divergence_numpy(v[0], bwd)
    )


def test_barrier_kernels_agree(instance):
    shape, fwd, bwd, nodes, v, rng = instance
    interior = nodes[1:-1]
    coords = coords_table(shape)
    v1, g1 = _kernels._floor_barrier_numba(interior, 0.05)
    v2, g2 = _kernels._floor_barrier_numpy(interior, 0.05)
    assert v1 == pytest.approx(v2, rel=1e-13)
    assert np.allclose(g1, g2, rtol=1e-13)
    cap = 60.0
    l1, lg1 = _kernels._lip_barrier_numba(interior, coords, 4, cap)
    l2, lg2 = _kernels._lip_barrier_numpy(interior, coords, 4, cap)
    assert l1 == pytest.approx(l2, rel=1e-12)
    assert np.allclose(lg1, lg2, rtol=1e-11, atol=1e-12)


def test_disable_flag_runs_pure_numpy_end_to_end():
    script = textwrap.dedent(
        """
        import numpy as np
        import torusot
        assert torusot.NUMBA_ENABLED is False
        from torusot.grid import GridShape
        from torusot.fields import Density
        from torusot.solver import SolverOptions, solve_distance
        rng = np.random.default_rng(0)
        shape = GridShape(1, 4)
        v0 = np.exp(rng.normal(0, 0.4, 4)); v0 *= 4 / v0.sum()
        v1 = np.exp(rng.normal(0, 0.4, 4)); v1 *= 4 / v1.sum()
        rep = solve_distance(Density(shape, v0), Density(shape, v1),
                             SolverOptions(tsteps=8, refine=False))
        assert rep.feasibility_residual < 1e-9
        print(repr(rep.value))
        """
    )
    env = dict(os.environ, TORUSOT_DISABLE_NUMBA="1")
    result = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, env=env,
        timeout=300,
    )
    assert result.returncode == 0, result.stderr
    numpy_value = float(result.stdout.strip())

    # same instance through the numba path
    from torusot.fields import Density
    from torusot.solver import SolverOptions, solve_distance

    rng = np.random.default_rng(0)
    shape = GridShape(1, 4)
    v0 = np.exp(rng.normal(0, 0.4, 4))
    v0 *= 4 / v0.sum()
    v1 = np.exp(rng.normal(0, 0.4, 4))
    v1 *= 4 / v1.sum()
    rep = solve_distance(Density(shape, v0), Density(shape, v1),
                         SolverOptions(tsteps=8, refine=False))
    assert rep.value == pytest.approx(numpy_value, rel=1e-6)
