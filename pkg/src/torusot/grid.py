"""Geometry and indexing of the periodic lattice torus.

Sites of the ``d``-dimensional lattice with ``N`` points per axis are
addressed either by coordinate tuples (each entry in ``0..N-1``, arithmetic
modulo ``N``) or by a flat row-major index (last axis fastest).  A *facet* is
the oriented interface between a site ``a`` and its forward neighbour
``a + e_i``; the facet set therefore has exactly ``d * N**d`` elements, and
the backward-oriented interface of ``a`` along axis ``i`` is the same facet
based at ``a - e_i``.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

MAX_SITES = 4096


@dataclass(frozen=True)
class GridShape:
    """Shape of the periodic lattice: ``dim`` axes, ``side`` sites per axis."""

    dim: int
    side: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.side < 3:
            # side 1 and 2 break the forward/backward neighbour distinction
            # (for side 2 the two neighbours of a site coincide).
            raise ValueError(f"side must be >= 3, got {self.side}")
        if self.side**self.dim > MAX_SITES:
            raise ValueError(
                f"grid with {self.side}**{self.dim} sites exceeds the "
                f"desk-scale limit of {MAX_SITES}"
            )

    @property
    def n_sites(self) -> int:
        return self.side**self.dim

    @property
    def n_facets(self) -> int:
        return self.dim * self.n_sites

    def sites(self) -> Iterator[tuple]:
        """Iterate all sites in flat (row-major) order."""
        return (tuple(c) for c in np.ndindex(*([self.side] * self.dim)))

    def site_index(self, coords) -> int:
        """Flat row-major index of a site (coordinates reduced modulo N)."""
        coords = self._check_coords(coords)
        idx = 0
        for c in coords:
            idx = idx * self.side + (int(c) % self.side)
        return idx

    def site_coords(self, index: int) -> tuple:
        """Inverse of :meth:`site_index`."""
        coords = []
        for _ in range(self.dim):
            coords.append(index % self.side)
            index //= self.side
        return tuple(reversed(coords))

    def _check_coords(self, coords):
        coords = tuple(int(c) for c in np.atleast_1d(coords))
        if len(coords) != self.dim:
            raise ValueError(
                f"site has {len(coords)} coordinates, grid has dim {self.dim}"
            )
        return coords


@dataclass(frozen=True)
class Facet:
    """Oriented lattice facet: interface between ``base`` and ``base + e_axis``.

    ``axis`` is 0-based.  The backward facet of a site ``a`` along axis ``i``
    is ``Facet(base=a - e_i, axis=i)``.
    """

    base: tuple
    axis: int


def torus_metric(shape: GridShape, a, b) -> float:
    """Toroidal Euclidean distance ``(1/N) * sqrt(sum_i delta_i**2)``.

    ``delta_i = min(|a_i - b_i|, N - |a_i - b_i|)`` is the wrap-around
    coordinate gap, the unique representative making this a metric on the
    quotient lattice.
    """
    da = _coord_gaps(shape, a, b)
    return float(np.sqrt(np.sum(da.astype(np.float64) ** 2))) / shape.side


def graph_metric(shape: GridShape, a, b) -> int:
    """Nearest-neighbour walk distance ``sum_i min(|a_i-b_i|, N-|a_i-b_i|)``."""
    return int(np.sum(_coord_gaps(shape, a, b)))


def _coord_gaps(shape: GridShape, a, b) -> np.ndarray:
    a = np.asarray(shape._check_coords(a))
    b = np.asarray(shape._check_coords(b))
    d = np.abs(a - b) % shape.side
    return np.minimum(d, shape.side - d)


def facet_neighbors(shape: GridShape, a) -> list:
    """The ``2 * dim`` facets incident to site ``a`` with divergence signs.

    Returns ``[(Facet, sign), ...]`` where the forward facet along each axis
    carries sign ``+1`` and the backward facet (based at ``a - e_i``) carries
    sign ``-1``, so that summing ``sign * V(facet)`` over the list gives the
    (unnormalised) outflow at ``a``.
    """
    coords = shape._check_coords(a)
    out = []
    for i in range(shape.dim):
        back = list(coords)
        back[i] = (back[i] - 1) % shape.side
        out.append((Facet(base=tuple(coords), axis=i), +1))
        out.append((Facet(base=tuple(back), axis=i), -1))
    return out


def cube_diameter(shape: GridShape) -> float:
    """Diameter ``sqrt(d)/N`` of each grid cell of the unit torus."""
    return float(np.sqrt(shape.dim)) / shape.side


def cube_volume(shape: GridShape) -> float:
    """Volume ``N**-d`` of each grid cell."""
    return 1.0 / shape.n_sites


def lattice_diameter(shape: GridShape) -> float:
    """Diameter of the lattice under :func:`torus_metric`."""
    worst = np.full(shape.dim, shape.side // 2)
    return float(np.sqrt(np.sum(worst.astype(np.float64) ** 2))) / shape.side


@lru_cache(maxsize=64)
def neighbor_tables(shape: GridShape):
    """Flat-index neighbour maps, cached per shape.

    Returns ``(fwd, bwd)``, both int64 arrays of shape ``(dim, n_sites)``:
    ``fwd[i, a]`` is the flat index of ``a + e_i`` and ``bwd[i, a]`` of
    ``a - e_i``.
    """
    d, n = shape.dim, shape.side
    idx = np.arange(shape.n_sites).reshape([n] * d)
    fwd = np.empty((d, shape.n_sites), dtype=np.int64)
    bwd = np.empty((d, shape.n_sites), dtype=np.int64)
    for i in range(d):
        fwd[i] = np.roll(idx, -1, axis=i).ravel()
        bwd[i] = np.roll(idx, 1, axis=i).ravel()
    return fwd, bwd


@lru_cache(maxsize=64)
def coords_table(shape: GridShape) -> np.ndarray:
    """(n_sites, dim) int64 array of site coordinates in flat order."""
    grids = np.meshgrid(*[np.arange(shape.side)] * shape.dim, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def pairwise_sq_distances(shape: GridShape, idx_a=None, idx_b=None) -> np.ndarray:
    """Matrix of squared toroidal distances between two site subsets.

    ``idx_a``/``idx_b`` are flat index arrays (default: all sites).  Used to
    build transport-cost matrices; quadratic storage, so callers should
    restrict to support sites on large grids.
    """
    coords = coords_table(shape)
    ca = coords if idx_a is None else coords[np.asarray(idx_a)]
    cb = coords if idx_b is None else coords[np.asarray(idx_b)]
    gap = np.abs(ca[:, None, :] - cb[None, :, :])
    gap = np.minimum(gap, shape.side - gap).astype(np.float64)
    return np.sum(gap**2, axis=2) / shape.side**2
