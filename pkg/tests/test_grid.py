import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusot.grid import (
    Facet,
    GridShape,
    cube_diameter,
    cube_volume,
    facet_neighbors,
    graph_metric,
    neighbor_tables,
    pairwise_sq_distances,
    torus_metric,
)


def test_shape_validation():
    with pytest.raises(ValueError):
        GridShape(0, 5)
    with pytest.raises(ValueError):
        GridShape(1, 2)
    with pytest.raises(ValueError):
        GridShape(1, 1)
    with pytest.raises(ValueError):
        GridShape(3, 17)  # 4913 sites > desk-scale cap
    assert GridShape(2, 4).n_sites == 16
    assert GridShape(2, 4).n_facets == 32


def test_site_indexing_row_major():
    shape = GridShape(2, 3)
    # row-major, last axis fastest
    assert shape.site_index((0, 1)) == 1
    assert shape.site_index((1, 0)) == 3
    assert shape.site_coords(5) == (1, 2)
    for idx, coords in enumerate(shape.sites()):
        assert shape.site_index(coords) == idx


def test_torus_metric_examples():
    assert torus_metric(GridShape(1, 4), (0,), (0,)) == 0.0
    assert torus_metric(GridShape(2, 4), (0, 0), (3, 3)) == pytest.approx(
        np.sqrt(2) / 4, abs=1e-15
    )
    assert torus_metric(GridShape(1, 8), (1,), (6,)) == pytest.approx(0.375, abs=1e-15)


def test_graph_metric_examples():
    assert graph_metric(GridShape(2, 4), (0, 0), (3, 3)) == 2
    assert graph_metric(GridShape(1, 8), (3,), (3,)) == 0
    assert graph_metric(GridShape(1, 8), (1,), (6,)) == 3


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        torus_metric(GridShape(2, 4), (0,), (1, 1))
    with pytest.raises(ValueError):
        graph_metric(GridShape(1, 4), (0, 0), (1, 1))


@pytest.mark.parametrize("dim,side", [(1, 5), (1, 8), (2, 4)])
def test_metric_axioms_exhaustive(dim, side):
    shape = GridShape(dim, side)
    sites = list(shape.sites())
    for a, b in itertools.product(sites, repeat=2):
        d_ab = torus_metric(shape, a, b)
        assert d_ab == torus_metric(shape, b, a)
        assert (d_ab == 0) == (a == b)
        assert graph_metric(shape, a, b) <= np.sqrt(dim) * side * d_ab + 1e-12
    for a, b, c in itertools.islice(itertools.product(sites, repeat=3), 4000):
        assert torus_metric(shape, a, c) <= (
            torus_metric(shape, a, b) + torus_metric(shape, b, c) + 1e-12
        )


def test_facet_neighbors_periodic_wrap():
    out = facet_neighbors(GridShape(1, 3), (0,))
    assert out == [(Facet(base=(0,), axis=0), 1), (Facet(base=(2,), axis=0), -1)]


def test_facet_neighbors_counts_and_telescoping():
    shape = GridShape(2, 3)
    signs = {}
    for a in shape.sites():
        entries = facet_neighbors(shape, a)
        assert len(entries) == 2 * shape.dim
        per_axis = {}
        for facet, sign in entries:
            per_axis.setdefault(facet.axis, []).append(sign)
            signs[facet] = signs.get(facet, 0) + sign
        assert all(sorted(v) == [-1, 1] for v in per_axis.values())
    # every facet appears with +1 at exactly one site and -1 at exactly one
    assert len(signs) == shape.n_facets
    assert all(v == 0 for v in signs.values())


def test_cube_geometry():
    shape = GridShape(2, 5)
    assert cube_diameter(shape) == pytest.approx(np.sqrt(2) / 5)
    assert cube_volume(shape) * shape.n_sites == pytest.approx(1.0)


def test_neighbor_tables_match_coordinates():
    shape = GridShape(2, 4)
    fwd, bwd = neighbor_tables(shape)
    for idx, coords in enumerate(shape.sites()):
        for i in range(shape.dim):
            plus = list(coords)
            plus[i] = (plus[i] + 1) % shape.side
            assert fwd[i, idx] == shape.site_index(plus)
            minus = list(coords)
            minus[i] = (minus[i] - 1) % shape.side
            assert bwd[i, idx] == shape.site_index(minus)


def test_pairwise_distances_match_metric():
    shape = GridShape(2, 4)
    mat = pairwise_sq_distances(shape)
    sites = list(shape.sites())
    for i, a in enumerate(sites):
        for j, b in enumerate(sites):
            assert mat[i, j] == pytest.approx(torus_metric(shape, a, b) ** 2, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(
    side=st.integers(min_value=3, max_value=12),
    a=st.integers(min_value=0, max_value=1000),
    b=st.integers(min_value=0, max_value=1000),
    c=st.integers(min_value=0, max_value=1000),
)
def test_torus_metric_triangle_1d(side, a, b, c):
    shape = GridShape(1, side)
    pa, pb, pc = (a % side,), (b % side,), (c % side,)
    assert torus_metric(shape, pa, pc) <= (
        torus_metric(shape, pa, pb) + torus_metric(shape, pb, pc) + 1e-12
    )
