import json
import os
import subprocess
import sys

import numpy as np
import pytest

from torusot.cli import main as cli_main
from torusot.continuum import ContinuumDensity
from torusot.experiments import (
    ExperimentConfig,
    run_inequality_suite,
    write_csv,
)
from torusot.fields import Density, TransportPath
from torusot.grid import GridShape
from torusot.io import (
    FormatError,
    load_config,
    load_density,
    load_path,
    save_density,
    save_path,
)


def random_density(shape, rng):
    vals = np.exp(rng.normal(0, 0.5, size=shape.n_sites))
    vals *= shape.n_sites / vals.sum()
    return Density(shape, vals)


# ---------------------------------------------------------------------------
# file round trips
# ---------------------------------------------------------------------------


def test_density_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    shape = GridShape(2, 8)
    rho = random_density(shape, rng)
    f = tmp_path / "rho.json"
    save_density(str(f), rho)
    back = load_density(str(f))
    assert back.shape == shape
    assert np.array_equal(back.values, rho.values)


def test_row_major_order_fixture(tmp_path):
    f = tmp_path / "grid.json"
    values = [1.2, 0.8, 0.9, 1.1, 1.0, 1.0, 1.0, 1.0, 1.0]
    f.write_text(json.dumps({"kind": "density", "dim": 2, "n": 3, "values": values}))
    rho = load_density(str(f))
    # row-major: site (0, 1) is the second stored value
    assert rho.values[rho.shape.site_index((0, 1))] == 0.8
    assert rho.values[rho.shape.site_index((1, 0))] == 1.1


def test_load_rejects_mass_violation(tmp_path):
    f = tmp_path / "bad_mass.json"
    values = (np.ones(8) * (1 + 1e-6)).tolist()
    f.write_text(json.dumps({"kind": "density", "dim": 1, "n": 8, "values": values}))
    with pytest.raises(ValueError, match="mass invariant"):
        load_density(str(f))


def test_load_rejects_negative_values(tmp_path):
    f = tmp_path / "neg.json"
    values = [-0.5, 1.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
    f.write_text(json.dumps({"kind": "density", "dim": 1, "n": 8, "values": values}))
    with pytest.raises(ValueError, match="negative"):
        load_density(str(f))


def test_load_rejects_malformed(tmp_path):
    f = tmp_path / "junk.json"
    f.write_text("{not json")
    with pytest.raises(FormatError, match="structured-text"):
        load_density(str(f))
    f2 = tmp_path / "unknown.json"
    f2.write_text(json.dumps({"kind": "mystery"}))
    with pytest.raises(FormatError, match="unknown"):
        load_density(str(f2))


def test_continuum_density_roundtrip(tmp_path):
    mu = ContinuumDensity.from_modes(1, {(1,): 0.1 - 0.2j, (3,): 0.05j})
    f = tmp_path / "mu.json"
    save_density(str(f), mu)
    back = load_density(str(f))
    assert np.array_equal(back.poly.freqs, mu.poly.freqs)
    assert np.array_equal(back.poly.coeffs, mu.poly.coeffs)


def test_path_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    shape = GridShape(1, 5)
    nodes = np.abs(rng.normal(1, 0.2, size=(4, 5))) + 0.2
    mom = rng.normal(size=(3, 1, 5))
    path = TransportPath(shape, nodes, mom)
    f = tmp_path / "path.json"
    save_path(str(f), path)
    back = load_path(str(f))
    assert np.array_equal(back.node_densities, nodes)
    assert np.array_equal(back.interval_momenta, mom)


def test_load_config(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"seed": 7, "cases": 2}))
    assert load_config(str(f)) == {"seed": 7, "cases": 2}
    bad = tmp_path / "bad.json"
    bad.write_text("[1,2]")
    with pytest.raises(FormatError):
        load_config(str(bad))


# ---------------------------------------------------------------------------
# CSV determinism
# ---------------------------------------------------------------------------


def test_suite_csv_deterministic(tmp_path):
    cfg = ExperimentConfig(dim=1, n_list=[5], cases=1, seed=11, tol=1e-3)
    rows1 = run_inequality_suite(cfg)
    rows2 = run_inequality_suite(cfg)
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(rows1, str(f1), timestamp=False)
    write_csv(rows2, str(f2), timestamp=False)
    assert f1.read_bytes() == f2.read_bytes()


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_distance_and_heat(tmp_path, capsys):
    rng = np.random.default_rng(2)
    shape = GridShape(1, 5)
    r0, r1 = random_density(shape, rng), random_density(shape, rng)
    f0, f1 = tmp_path / "r0.json", tmp_path / "r1.json"
    save_density(str(f0), r0)
    save_density(str(f1), r1)
    code = cli_main([
        "distance", "--rho0", str(f0), "--rho1", str(f1), "--tsteps", "8",
        "--path-out", str(tmp_path / "path.json"),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "value" in out and "feasibility_residual" in out
    path = load_path(str(tmp_path / "path.json"))
    assert path.tsteps == 8

    dest = tmp_path / "heated.json"
    code = cli_main(["heat", "--density", str(f0), "--time", "0.05", "--dest", str(dest)])
    assert code == 0
    heated = load_density(str(dest))
    assert heated.values.sum() == pytest.approx(5.0, rel=1e-12)


def test_cli_suite_exit_code(tmp_path):
    code = cli_main([
        "suite", "--dim", "1", "--n", "5", "--cases", "1", "--seed", "3",
        "--out", str(tmp_path),
    ])
    assert code == 0
    text = (tmp_path / "suite.csv").read_text()
    assert text.splitlines()[0].startswith("# torusot results")
    assert "metric-vs-wasserstein" in text


def test_cli_config_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"cases": 1, "n": 5}))
    code = cli_main([
        "suite", "--dim", "1", "--n", "8", "--cases", "5", "--seed", "3",
        "--out", str(tmp_path), "--config", str(cfg),
    ])
    assert code == 0
    text = (tmp_path / "suite.csv").read_text()
    assert "n=5" in text and "n=8" not in text


def test_cli_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    code = cli_main(["suite", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2


def test_cli_regpath(tmp_path, capsys):
    code = cli_main([
        "regpath", "--dim", "1", "--n", "8", "--eps", "0.2", "--delta", "0.5",
        "--seed", "5", "--tsteps", "8", "--out", str(tmp_path),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "total:" in out and "VIOLATED" not in out


def test_cli_entrypoint_subprocess(tmp_path):
    env = dict(os.environ)
    result = subprocess.run(
        [sys.executable, "-m", "torusot.cli", "suite", "--dim", "1", "--n", "5",
         "--cases", "1", "--seed", "3", "--out", str(tmp_path)],
        capture_output=True, text=True, env=env, timeout=600,
    )
    assert result.returncode == 0, result.stderr
