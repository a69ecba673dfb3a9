"""Uniform structured meshes of the unit square / unit cube.

Nodes are numbered lexicographically with x running fastest, so a nodal
array reshaped with ``grid.lattice_shape`` is indexed ``[iz, iy, ix]``
(``[iy, ix]`` in 2D).  Cells are numbered the same way by their lower
corner.  Nothing but ``dim`` and ``n`` is stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class StructuredGrid:
    dim: int
    n: int  # cells per axis

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n_per_axis must be a positive integer, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** self.dim

    @property
    def n_cells(self) -> int:
        return self.n**self.dim

    @property
    def lattice_shape(self) -> tuple[int, ...]:
        """Shape of a nodal array viewed as a lattice (slowest axis first)."""
        return (self.n + 1,) * self.dim

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    def lattice(self, idx) -> np.ndarray:
        """Integer lattice coordinates ``(ix, iy[, iz])`` of node indices."""
        idx = np.asarray(idx)
        m = self.n + 1
        return np.stack([(idx // m**a) % m for a in range(self.dim)], axis=-1)

    def node_index(self, coords) -> np.ndarray:
        coords = np.asarray(coords)
        m = self.n + 1
        return sum(coords[..., a] * m**a for a in range(self.dim))

    def coordinates(self) -> np.ndarray:
        """Physical node coordinates, shape ``(n_nodes, dim)``."""
        return self.lattice(np.arange(self.n_nodes)) * self.h

    def cell_nodes(self, cells=None) -> np.ndarray:
        """Node indices of cells, shape ``(len(cells), 2**dim)``.

        Local node ``a`` sits at offset bit ``(a >> axis) & 1`` along each axis.
        """
        if cells is None:
            cells = np.arange(self.n_cells)
        cells = np.asarray(cells)
        corner = np.stack([(cells // self.n**a) % self.n for a in range(self.dim)], axis=-1)
        base = self.node_index(corner)
        return base[:, None] + self.local_offsets[None, :]

    @cached_property
    def local_offsets(self) -> np.ndarray:
        m = self.n + 1
        bits = local_bits(self.dim)
        return (bits * m ** np.arange(self.dim)).sum(axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        lat = self.lattice(np.arange(self.n_nodes))
        return ((lat == 0) | (lat == self.n)).any(axis=1)


def local_bits(dim: int) -> np.ndarray:
    """Reference-cell vertex offsets, shape ``(2**dim, dim)``, x bit lowest."""
    a = np.arange(2**dim)
    return np.stack([(a >> ax) & 1 for ax in range(dim)], axis=1)


def build_grid(n_per_axis: int, dim: int = 3) -> StructuredGrid:
    return StructuredGrid(dim=dim, n=n_per_axis)


def boundary_node_indices(grid: StructuredGrid) -> np.ndarray:
    """Sorted indices of nodes with a lattice coordinate equal to 0 or n."""
    return np.flatnonzero(grid.boundary_mask)


def interior_node_indices(grid: StructuredGrid) -> np.ndarray:
    return np.flatnonzero(~grid.boundary_mask)
