"""Structured-text (JSON) serialisation for densities, coefficient sets,
paths, and transport plans, plus the CSV result schema.

Lattice values are stored flat in row-major site order (last axis fastest),
matching the in-memory layout, so save/load round-trips are bit-identical;
JSON floats are emitted with ``repr`` precision, which Python guarantees to
round-trip exactly.
"""

import json

import numpy as np

from .continuum import ContinuumDensity, TrigPoly
from .exact import TransportPlan
from .fields import Density, MomentumField, TransportPath
from .grid import GridShape


class FormatError(ValueError):
    """Malformed document (missing fields, wrong kind, bad structure)."""


def _shape_from(doc) -> GridShape:
    try:
        return GridShape(int(doc["dim"]), int(doc["n"]))
    except KeyError as exc:
        raise FormatError(f"missing field {exc} in document") from exc


def save_density(path: str, rho) -> None:
    if isinstance(rho, Density):
        doc = {
            "kind": "density",
            "dim": rho.shape.dim,
            "n": rho.shape.side,
            "values": rho.values.tolist(),
        }
    elif isinstance(rho, ContinuumDensity):
        doc = {
            "kind": "continuum_density",
            "dim": rho.dim,
            "modes": rho.poly.freqs.tolist(),
            "coeffs_re": rho.poly.coeffs.real.tolist(),
            "coeffs_im": rho.poly.coeffs.imag.tolist(),
        }
    else:
        raise TypeError(f"cannot save {type(rho).__name__}")
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_density(path: str):
    """Load a lattice or continuum density, enforcing the mass and
    nonnegativity invariants (each failure mode carries its own message)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not a valid structured-text document: {exc}") from exc
    kind = doc.get("kind")
    if kind == "density":
        shape = _shape_from(doc)
        values = np.asarray(doc["values"], dtype=np.float64)
        if np.any(values < 0):
            raise ValueError(
                f"density file contains negative values (min {values.min()})"
            )
        mass = float(values.sum())
        if abs(mass - shape.n_sites) > 1e-9 * shape.n_sites:
            raise ValueError(
                f"density file violates the mass invariant: sum {mass}, "
                f"expected {shape.n_sites}"
            )
        return Density(shape, values)
    if kind == "continuum_density":
        dim = int(doc["dim"])
        freqs = np.asarray(doc["modes"], dtype=np.int64).reshape(-1, dim)
        coeffs = np.asarray(doc["coeffs_re"], dtype=np.float64) + 1j * np.asarray(
            doc["coeffs_im"], dtype=np.float64
        )
        return ContinuumDensity._wrap(TrigPoly(dim, freqs, coeffs))
    raise FormatError(f"unknown document kind {kind!r}")


def save_path(path: str, tp: TransportPath) -> None:
    doc = {
        "kind": "transport_path",
        "dim": tp.shape.dim,
        "n": tp.shape.side,
        "tsteps": tp.tsteps,
        "node_densities": tp.node_densities.tolist(),
        "interval_momenta": tp.interval_momenta.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_path(path: str) -> TransportPath:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "transport_path":
        raise FormatError(f"expected a transport_path document, got {doc.get('kind')!r}")
    shape = _shape_from(doc)
    return TransportPath(
        shape,
        np.asarray(doc["node_densities"], dtype=np.float64),
        np.asarray(doc["interval_momenta"], dtype=np.float64),
    )


def save_plan(path: str, plan: TransportPlan) -> None:
    doc = {
        "kind": "transport_plan",
        "dim": plan.shape.dim,
        "n": plan.shape.side,
        "sources": plan.sources.tolist(),
        "targets": plan.targets.tolist(),
        "masses": plan.masses.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def save_momentum(path: str, v: MomentumField) -> None:
    doc = {
        "kind": "momentum",
        "dim": v.shape.dim,
        "n": v.shape.side,
        "values": v.values.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config is not valid structured text: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("config document must be a mapping")
    return doc
