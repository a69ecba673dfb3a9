import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipcs.grid import StructuredGrid, boundary_node_indices, build_grid, interior_node_indices


@pytest.mark.parametrize(
    "n, cells, nodes, h",
    [(1, 1, 8, 1.0), (2, 8, 27, 0.5), (32, 32768, 35937, 1 / 32)],
)
def test_build_grid_counts(n, cells, nodes, h):
    g = build_grid(n, 3)
    assert (g.n_cells, g.n_nodes) == (cells, nodes)
    assert g.h == h


@pytest.mark.parametrize("n, dim, n_boundary", [(2, 3, 26), (4, 3, 125 - 27), (1, 2, 4)])
def test_boundary_counts(n, dim, n_boundary):
    g = build_grid(n, dim)
    assert len(boundary_node_indices(g)) == n_boundary


@pytest.mark.parametrize("bad", [(0, 3), (-1, 2), (4, 1), (4, 4)])
def test_invalid_grids_rejected(bad):
    with pytest.raises(ValueError):
        build_grid(*bad)


@given(st.integers(1, 9), st.sampled_from([2, 3]))
def test_grid_invariants(n, dim):
    g = build_grid(n, dim)
    assert abs(g.h * n - 1.0) < 1e-15
    idx = np.arange(g.n_nodes)
    assert np.array_equal(g.node_index(g.lattice(idx)), idx)
    b, i = boundary_node_indices(g), interior_node_indices(g)
    assert len(b) + (n - 1) ** dim == (n + 1) ** dim
    assert len(b) + len(i) == g.n_nodes
    lat = g.lattice(b)
    assert np.all(((lat == 0) | (lat == n)).any(axis=1))
    conn = g.cell_nodes()
    assert conn.shape == (g.n_cells, 2**dim)
    assert all(len(set(row)) == 2**dim for row in conn)
    assert np.all(np.diff(conn, axis=1) > 0)  # lexicographic order within the cell


def test_coordinates_x_fastest():
    g = StructuredGrid(2, 2)
    xy = g.coordinates()
    assert np.allclose(xy[:3], [[0, 0], [0.5, 0], [1, 0]])
    assert np.allclose(xy[3], [0, 0.5])
