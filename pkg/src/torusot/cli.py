"""Command-line interface.

Subcommands: ``distance`` (solve between two density files), ``heat`` (apply
the lattice heat semigroup to a density file), ``suite`` (inequality
verification), ``converge`` (lattice-refinement experiment), ``ghmaps``
(almost-isometry/surjectivity defects), ``regpath`` (regularised gluing with
its budget report).  A structured-text config file (``--config``) overrides
any flag it names.  Exit codes: 0 all checks pass, 1 a check failed, 2
configuration error.
"""

import argparse
import os
import sys

import numpy as np

from .experiments import (
    ExperimentConfig,
    all_pass,
    run_convergence,
    run_gh_maps,
    run_inequality_suite,
    write_csv,
    random_regular_density,
)
from .fields import Density
from .grid import GridShape
from .heat import heat_apply
from .io import FormatError, load_config, load_density, save_density, save_path
from .means import MeanKind
from .regpaths import build_regularized_path, choose_constants
from .solver import SolverOptions, solve_distance


def _add_common(p):
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--tsteps", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--out", type=str, default=".")
    p.add_argument("--config", type=str, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="torusot", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distance", help="transport distance between two density files")
    p.add_argument("--rho0", required=True)
    p.add_argument("--rho1", required=True)
    p.add_argument("--metric", choices=["log", "harmonic", "constrained"], default="log")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--path-out", type=str, default=None)
    _add_common(p)

    p = sub.add_parser("heat", help="apply the lattice heat semigroup to a density file")
    p.add_argument("--density", required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--dest", required=True)
    _add_common(p)

    p = sub.add_parser("suite", help="run the inequality verification suite")
    _add_common(p)
    p.add_argument("--delta", type=float, default=0.5)

    p = sub.add_parser("converge", help="lattice refinement toward the continuum distance")
    p.add_argument("--s", type=float, default=0.02)
    p.add_argument("--n-list", type=str, default="4,8,16,32")
    p.add_argument("--mu0", type=str, default=None,
                   help="coefficient file for the first density (default: canonical pair)")
    p.add_argument("--mu1", type=str, default=None)
    _add_common(p)

    p = sub.add_parser("ghmaps", help="almost-isometry and almost-surjectivity defects")
    p.add_argument("--pairs", type=str, default="0.04:5,0.01:10,0.0025:20",
                   help="comma-separated s:n pairs")
    _add_common(p)

    p = sub.add_parser("regpath", help="build a regularised glued path and report bounds")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.5)
    _add_common(p)
    return ap


def _apply_config(args):
    if getattr(args, "config", None):
        overrides = load_config(args.config)
        for key, value in overrides.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise FormatError(f"unknown config key {key!r}")
            setattr(args, attr, value)
    return args


def _outfile(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_distance(args) -> int:
    rho0 = load_density(args.rho0)
    rho1 = load_density(args.rho1)
    kind = MeanKind.HARMONIC if args.metric == "harmonic" else MeanKind.LOGARITHMIC
    delta = args.delta if args.metric == "constrained" else None
    opts = SolverOptions(tsteps=args.tsteps, kind=kind, delta=delta,
                         tol=args.tol, refine=args.refine)
    report = solve_distance(rho0, rho1, opts)
    print(f"value {report.value!r}")
    print(f"objective {report.objective!r}")
    print(f"feasibility_residual {report.feasibility_residual:.3e}")
    print(f"iterations {report.iterations}")
    for w in report.warnings:
        print(f"warning: {w}")
    if args.path_out:
        save_path(args.path_out, report.path)
    return 0


def cmd_heat(args) -> int:
    rho = load_density(args.density)
    if not isinstance(rho, Density):
        raise FormatError("heat expects a lattice density file")
    out = heat_apply(rho.shape, args.time, rho)
    save_density(args.dest, out)
    print(f"saved {args.dest}")
    return 0


def cmd_suite(args) -> int:
    cfg = ExperimentConfig(
        experiment="suite", dim=args.dim, n_list=[args.n], tsteps=args.tsteps,
        tol=args.tol, seed=args.seed, cases=args.cases, out_dir=args.out,
        delta=args.delta,
    )
    rows = run_inequality_suite(cfg)
    path = _outfile(args, "suite.csv")
    write_csv(rows, path)
    ok = all_pass(rows)
    print(f"{sum(r.passed for r in rows)}/{len(rows)} rows pass -> {path}")
    return 0 if ok else 1


def cmd_converge(args) -> int:
    n_list = [int(v) for v in str(args.n_list).split(",") if v]
    cfg = ExperimentConfig(
        experiment="converge", dim=1, n_list=n_list, s_list=[args.s],
        tsteps=args.tsteps, tol=args.tol, seed=args.seed, cases=args.cases,
        out_dir=args.out,
    )
    mu0 = load_density(args.mu0) if args.mu0 else None
    mu1 = load_density(args.mu1) if args.mu1 else None
    rows = run_convergence(cfg, mu0, mu1)
    path = _outfile(args, "converge.csv")
    write_csv(rows, path)
    ok = all_pass(rows)
    print(f"{sum(r.passed for r in rows)}/{len(rows)} rows pass -> {path}")
    return 0 if ok else 1


def cmd_ghmaps(args) -> int:
    pairs = []
    for chunk in str(args.pairs).split(","):
        s_txt, n_txt = chunk.split(":")
        pairs.append((float(s_txt), int(n_txt)))
    cfg = ExperimentConfig(
        experiment="ghmaps", dim=1, n_list=[n for _, n in pairs],
        s_list=[s for s, _ in pairs], tsteps=args.tsteps, tol=args.tol,
        seed=args.seed, cases=args.cases, out_dir=args.out,
    )
    rows = run_gh_maps(cfg)
    path = _outfile(args, "ghmaps.csv")
    write_csv(rows, path)
    ok = all_pass(rows)
    print(f"{sum(r.passed for r in rows)}/{len(rows)} rows pass -> {path}")
    return 0 if ok else 1


def cmd_regpath(args) -> int:
    shape = GridShape(args.dim, args.n)
    rng = np.random.default_rng(args.seed)
    rho0 = random_regular_density(shape, args.delta, rng)
    rho1 = random_regular_density(shape, args.delta, rng)
    base = solve_distance(rho0, rho1, SolverOptions(tsteps=args.tsteps, tol=args.tol))
    sched = choose_constants(args.eps, args.delta, shape)
    _, report = build_regularized_path(rho0, rho1, base.path, sched)
    lines = [
        f"schedule ell={sched.ell!r} a={sched.a!r} b={sched.b!r} delta_bar={sched.delta_bar!r}",
        f"base objective {base.objective!r}",
    ]
    ok = True
    csv_lines = ["segment,bound,measured,slack"]
    for seg in report.segment_bounds:
        status = "ok" if seg.measured <= seg.bound + 1e-9 else "VIOLATED"
        ok &= status == "ok"
        lines.append(
            f"{seg.name}: measured {seg.measured!r} bound {seg.bound!r} [{status}]"
        )
        csv_lines.append(f"{seg.name},{seg.bound!r},{seg.measured!r},{seg.slack!r}")
    budget = base.objective + args.eps**2 + 2 * args.tol
    status = "ok" if report.total_measured <= budget else "VIOLATED"
    ok &= status == "ok"
    lines.append(f"total: measured {report.total_measured!r} budget {budget!r} [{status}]")
    csv_lines.append(
        f"total,{budget!r},{report.total_measured!r},{budget - report.total_measured!r}"
    )
    lines.append(f"residual {report.residual:.3e} min {report.min_density!r} lip {report.lip_max!r}")
    out_csv = _outfile(args, "regpath.csv")
    with open(out_csv, "w") as fh:
        fh.write("\n".join(csv_lines) + "\n")
    lines.append(f"bound report -> {out_csv}")
    for line in lines:
        print(line)
    return 0 if ok else 1


COMMANDS = {
    "distance": cmd_distance,
    "heat": cmd_heat,
    "suite": cmd_suite,
    "converge": cmd_converge,
    "ghmaps": cmd_ghmaps,
    "regpath": cmd_regpath,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        args = _apply_config(args)
    except (FormatError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (FormatError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
