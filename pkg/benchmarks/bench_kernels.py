"""Benchmark the numba hot kernels against their pure-numpy fallbacks.

Run directly: ``python benchmarks/bench_kernels.py [--repeat 20]``.  Both
implementation families are imported explicitly, so the comparison does not
depend on the ``TORUSOT_DISABLE_NUMBA`` environment flag; it does require
numba to be installed (otherwise only the numpy path is timed).
"""

import argparse
import time

import numpy as np

from torusot import _kernels
from torusot._accel import NUMBA_ENABLED
from torusot.grid import GridShape, coords_table, neighbor_tables


def timeit(fn, repeat):
    fn()  # warm-up (jit compilation, caches)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    cases = [
        ("d=1 N=64  T=64", GridShape(1, 64), 64),
        ("d=2 N=16  T=32", GridShape(2, 16), 32),
    ]
    rows = []
    for label, shape, tsteps in cases:
        m = shape.n_sites
        fwd, bwd = neighbor_tables(shape)
        coords = coords_table(shape)
        nodes = np.abs(rng.normal(1.0, 0.2, size=(tsteps + 1, m))) + 0.2
        v = rng.normal(size=(tsteps, shape.dim, m))
        f = rng.normal(size=m)
        a = np.abs(rng.normal(1.0, 0.3, size=100_000)) + 1e-3
        b = np.abs(rng.normal(1.0, 0.3, size=100_000)) + 1e-3

        benches = [
            ("log_mean[100k]", lambda: _kernels._mean_arrays_numpy(a, b, False),
             (lambda: _kernels._mean_arrays_numba(a, b, False)) if NUMBA_ENABLED else None),
            ("path_action_grad", lambda: _kernels._path_action_grad_numpy(nodes, v, fwd, False),
             (lambda: _kernels._path_action_grad_numba(nodes, v, fwd, False)) if NUMBA_ENABLED else None),
            ("lipschitz_scan", lambda: _kernels._lipschitz_numpy(f, coords, shape.side),
             (lambda: _kernels._lipschitz_numba(f, coords, shape.side)) if NUMBA_ENABLED else None),
            ("divergence", lambda: _kernels._divergence_numpy(v[0], bwd),
             (lambda: _kernels._divergence_numba(v[0], bwd)) if NUMBA_ENABLED else None),
        ]
        for name, numpy_fn, numba_fn in benches:
            t_np = timeit(numpy_fn, args.repeat)
            if numba_fn is None:
                rows.append((label, name, t_np, float("nan"), float("nan")))
                continue
            t_nb = timeit(numba_fn, args.repeat)
            rows.append((label, name, t_np, t_nb, t_np / t_nb))

    print(f"{'case':16s} {'kernel':18s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for label, name, t_np, t_nb, ratio in rows:
        print(f"{label:16s} {name:18s} {t_np*1e3:10.3f}ms {t_nb*1e3:10.3f}ms {ratio:8.1f}x")


if __name__ == "__main__":
    main()
