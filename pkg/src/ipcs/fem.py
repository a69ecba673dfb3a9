"""Q1 (multilinear) scalar elements on a StructuredGrid.

Cell-wise work is vectorized over slabs of cells stacked along the slowest
lattice axis; ``cell_slabs`` bounds the slab size so that quadrature on a
128^3 mesh fits in memory.

``TensorQuadrature`` evaluates tensor Gauss rules by sum factorization: the
quadrature points of a slab form a lattice, Q1 fields are interpolated to it
one axis at a time, and test-function integrals are the transposed sweeps.
Coordinates are handed out as broadcastable 1D arrays so that separable
exact solutions only evaluate transcendental functions per axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ipcs.grid import StructuredGrid, local_bits

SLAB_CELLS = 1 << 17


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim) on [0, 1]^dim
    weights: np.ndarray  # (nq,), sum to 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def gauss_rule(q: int, dim: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule with ``q`` points per direction on [0,1]^dim."""
    if q not in (2, 3, 4):
        raise ValueError(f"unsupported quadrature order q={q}")
    x, w = np.polynomial.legendre.leggauss(q)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([np.arange(q)] * dim), indexing="ij")
    # axis 0 of the point list varies fastest in x, matching node numbering
    idx = np.stack([g.ravel() for g in grids[::-1]], axis=1)
    return QuadratureRule(points=x[idx], weights=np.prod(w[idx], axis=1))


def shape_eval(ref_point) -> tuple[np.ndarray, np.ndarray]:
    """Q1 basis values and reference gradients.

    ``ref_point`` of shape ``(dim,)`` gives ``(2**dim,)`` values and
    ``(2**dim, dim)`` gradients; a batch ``(m, dim)`` adds a leading axis.
    Physical gradients are reference gradients divided by h.
    """
    pts = np.asarray(ref_point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    dim = pts.shape[1]
    bits = local_bits(dim)  # (nloc, dim)
    # 1D factors: phi_0 = 1 - x, phi_1 = x; derivatives -1, +1
    f = np.where(bits[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])
    df = np.where(bits == 1, 1.0, -1.0)[None, :, :]
    values = np.prod(f, axis=2)
    grads = np.empty(f.shape)
    for ax in range(dim):
        others = np.delete(f, ax, axis=2)
        grads[:, :, ax] = df[:, :, ax] * np.prod(others, axis=2)
    if single:
        return values[0], grads[0]
    return values, grads


def nodal_interpolate(f: Callable, grid: StructuredGrid, t: float) -> np.ndarray:
    """Nodal values ``f(x_i, t)``.

    ``f`` maps points ``(m, dim)`` to ``(m,)`` (scalar) or ``(m, dim)``
    (vector); vector fields come back component-major, shape ``(dim, n_nodes)``.
    """
    vals = np.asarray(f(grid.coordinates(), t), dtype=float)
    if vals.ndim == 2:
        return np.ascontiguousarray(vals.T)
    return vals


# ---------------------------------------------------------------- cell slabs


@dataclass(frozen=True)
class Slab:
    """Cells whose lower corner has slowest lattice index in [start, stop)."""

    grid: StructuredGrid
    start: int
    stop: int

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.stop - self.start,) + (self.grid.n,) * (self.grid.dim - 1)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def node_slices(self, bits) -> tuple[slice, ...]:
        """Lattice slices selecting local node ``bits`` of every slab cell."""
        dim, n = self.grid.dim, self.grid.n
        sl = []
        for j in range(dim):
            b = int(bits[dim - 1 - j])
            if j == 0:
                sl.append(slice(self.start + b, self.stop + b))
            else:
                sl.append(slice(b, b + n))
        return tuple(sl)

    def gather(self, lattice_field: np.ndarray) -> np.ndarray:
        """Local nodal values, shape ``(*lead, n_cells, 2**dim)``.

        ``lattice_field`` has shape ``(*lead, *grid.lattice_shape)``.
        """
        lead = lattice_field.shape[: lattice_field.ndim - self.grid.dim]
        out = np.empty(lead + (self.n_cells, 2**self.grid.dim))
        for a, bits in enumerate(local_bits(self.grid.dim)):
            out[..., a] = lattice_field[(...,) + self.node_slices(bits)].reshape(lead + (-1,))
        return out

    def scatter_add(self, lattice_target: np.ndarray, local: np.ndarray) -> None:
        """Add ``local`` ``(*lead, n_cells, 2**dim)`` into a lattice array."""
        lead = local.shape[:-2]
        for a, bits in enumerate(local_bits(self.grid.dim)):
            lattice_target[(...,) + self.node_slices(bits)] += local[..., a].reshape(lead + self.shape)

    def cell_corners(self) -> np.ndarray:
        """Physical lower-corner coordinates of slab cells, ``(n_cells, dim)``."""
        idx = np.indices(self.shape).reshape(self.grid.dim, -1)
        idx[0] += self.start
        return idx[::-1].T * self.grid.h

    def quadrature_points(self, rule: QuadratureRule) -> np.ndarray:
        """Physical quadrature points, ``(n_cells, nq, dim)``."""
        return self.cell_corners()[:, None, :] + self.grid.h * rule.points[None, :, :]


def cell_slabs(grid: StructuredGrid, max_cells: int = SLAB_CELLS) -> Iterator[Slab]:
    layer = grid.n ** (grid.dim - 1)
    step = max(1, max_cells // layer)
    for start in range(0, grid.n, step):
        yield Slab(grid, start, min(start + step, grid.n))


def _axis_matrix(m: int, B: np.ndarray) -> np.ndarray:
    """``(m*q, m+1)`` matrix taking nodal values on m cells to q points per cell."""
    q = B.shape[0]
    E = np.zeros((m, q, m + 1))
    cells = np.arange(m)
    E[cells, :, cells] = B[:, 0]
    E[cells, :, cells + 1] = B[:, 1]
    return E.reshape(m * q, m + 1)


def _expand(X: np.ndarray, axis: int, B: np.ndarray) -> np.ndarray:
    """Nodal values (m+1 along ``axis``) to quadrature values (m*q along ``axis``)."""
    Xm = np.moveaxis(X, axis, -1)
    Y = Xm[..., :-1, None] * B[:, 0] + Xm[..., 1:, None] * B[:, 1]
    return np.moveaxis(Y.reshape(Y.shape[:-2] + (-1,)), -1, axis)


def _contract(Y: np.ndarray, axis: int, B: np.ndarray) -> np.ndarray:
    """Transpose of ``_expand``."""
    Ym = np.moveaxis(Y, axis, -1)
    q = B.shape[0]
    X = np.zeros(Ym.shape[:-1] + (Ym.shape[-1] // q + 1,))
    for i in range(q):
        X[..., :-1] += Ym[..., i::q] * B[i, 0]
        X[..., 1:] += Ym[..., i::q] * B[i, 1]
    return np.moveaxis(X, -1, axis)


class TensorQuadrature:
    """q-point Gauss quadrature over all cells of a grid, by slabs."""

    def __init__(self, grid: StructuredGrid, q: int):
        rule = gauss_rule(q, 1)
        self.grid = grid
        self.q = q
        self.xi = rule.points[:, 0]
        self.w = rule.weights
        self.basis = np.stack([1.0 - self.xi, self.xi], axis=1)
        self.dbasis = np.tile([-1.0, 1.0], (q, 1)) / grid.h

    def slabs(self, max_cells: int = SLAB_CELLS // 4) -> Iterator[Slab]:
        return cell_slabs(self.grid, max_cells)

    def _axis_cells(self, slab: Slab, j: int) -> np.ndarray:
        return np.arange(slab.start, slab.stop) if j == 0 else np.arange(self.grid.n)

    def coordinates(self, slab: Slab) -> tuple[np.ndarray, ...]:
        """Broadcastable quadrature coordinates ``(x, y[, z])`` of a slab."""
        d, h = self.grid.dim, self.grid.h
        out = []
        for c in range(d):
            j = d - 1 - c
            vals = ((self._axis_cells(slab, j)[:, None] + self.xi[None, :]) * h).ravel()
            shape = [1] * d
            shape[j] = vals.size
            out.append(vals.reshape(shape))
        return tuple(out)

    def weights(self, slab: Slab) -> np.ndarray:
        d, h = self.grid.dim, self.grid.h
        wt = np.ones([1] * d)
        for j in range(d):
            wj = np.tile(self.w * h, len(self._axis_cells(slab, j)))
            shape = [1] * d
            shape[j] = wj.size
            wt = wt * wj.reshape(shape)
        return wt

    def _bases(self, deriv):
        d = self.grid.dim
        return [self.dbasis if deriv is not None and j == d - 1 - deriv else self.basis for j in range(d)]

    def evaluate(self, lattice_field: np.ndarray, slab: Slab, deriv: int | None = None) -> np.ndarray:
        """Field (or its ``deriv`` partial derivative) at the slab's quadrature lattice.

        ``lattice_field`` has shape ``(*lead, *grid.lattice_shape)``.
        """
        lead = lattice_field.ndim - self.grid.dim
        X = lattice_field[(slice(None),) * lead + (slice(slab.start, slab.stop + 1),)]
        for j, B in enumerate(self._bases(deriv)):
            X = _expand(X, lead + j, B)
        return X

    def integrate(self, values: np.ndarray, slab: Slab, out: np.ndarray, deriv: int | None = None) -> None:
        """``out[i] += sum_q w_q values_q * phi_i(x_q)`` (or ``d phi_i``) over the slab."""
        lead = values.ndim - self.grid.dim
        X = values * self.weights(slab)
        for j, B in enumerate(self._bases(deriv)):
            X = _contract(X, lead + j, B)
        out[(slice(None),) * lead + (slice(slab.start, slab.stop + 1),)] += X

    # separable fields: one-dimensional quadrature and tensor contractions

    def axis_points(self) -> np.ndarray:
        """Quadrature abscissae along one axis, ``(n*q,)``."""
        n = self.grid.n
        return ((np.arange(n)[:, None] + self.xi[None, :]) * self.grid.h).ravel()

    def axis_weights(self) -> np.ndarray:
        return np.tile(self.w * self.grid.h, self.grid.n)

    def _axis_loads(self, field, deriv: int | None) -> list[np.ndarray]:
        """Per axis (x first), ``(n_terms, n+1)`` integrals of each term's factor times phi or phi'."""
        s, w = self.axis_points(), self.axis_weights()
        out = []
        for axis in range(self.grid.dim):
            B = self.dbasis if deriv == axis else self.basis
            E = _axis_matrix(self.grid.n, B)
            out.append((field.axis_values(axis, s) * w) @ E)
        return out

    def load(self, field, deriv: int | None = None) -> np.ndarray:
        """Lattice array ``int field * phi_i`` (or ``* d phi_i / dx_deriv``) for a ``SeparableField``."""
        loads = self._axis_loads(field, deriv)
        c = field.coefs
        if self.grid.dim == 2:
            return np.einsum("t,ti,tj->ji", c, *loads, optimize=True)
        return np.einsum("t,ti,tj,tk->kji", c, *loads, optimize=True)

    def integral(self, field) -> float:
        s, w = self.axis_points(), self.axis_weights()
        prod = field.coefs.copy()
        for axis in range(self.grid.dim):
            prod *= field.axis_values(axis, s) @ w
        return float(prod.sum())

    def inner(self, fa, fb) -> float:
        """``int fa * fb`` for two separable fields."""
        s, w = self.axis_points(), self.axis_weights()
        gram = np.outer(fa.coefs, fb.coefs)
        for axis in range(self.grid.dim):
            gram *= (fa.axis_values(axis, s) * w) @ fb.axis_values(axis, s).T
        return float(gram.sum())

    def _axis_gram(self, B: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        E = _axis_matrix(self.grid.n, B)
        G = (E.T * self.axis_weights()) @ E
        return np.diag(G, -1), np.diag(G), np.diag(G, 1)

    def gram(self, U: np.ndarray, deriv: int | None = None) -> float:
        """``int u_h^2`` (or ``int (d u_h / dx_deriv)^2``) for a nodal lattice field."""
        X = U
        d = self.grid.dim
        for axis in range(d):
            lo, di, up = self._axis_gram(self.dbasis if deriv == axis else self.basis)
            Xm = np.moveaxis(X, d - 1 - axis, -1)
            Y = Xm * di
            Y[..., 1:] += Xm[..., :-1] * lo
            Y[..., :-1] += Xm[..., 1:] * up
            X = np.moveaxis(Y, -1, d - 1 - axis)
        return float(np.sum(X * U))
