"""Sparse operators for the pressure-correction schemes.

Every scalar operator on a StructuredGrid lives on the same 3^d-point
stencil pattern, so all matrices share one pair of CSR index arrays and
differ only in their ``data``.  Element matrices are computed with q=2
Gauss quadrature on the reference cell and scattered into per-offset
"bands" (one lattice array per stencil offset) before being packed into
CSR order.

Velocity fields are component-major arrays of shape ``(dim, n_nodes)``;
``v.ravel()`` is the block vector ``(v^1 | v^2 | v^3)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from ipcs.fem import TensorQuadrature, cell_slabs, gauss_rule, shape_eval
from ipcs.grid import StructuredGrid, local_bits

# c*(w, w, chi) = -(I_h(w (x) w), grad chi) = FAST_CONVECTION_SIGN * sum_k M_k (w^k o w^l)
FAST_CONVECTION_SIGN = -1.0


class StencilPattern:
    """Shared CSR structure of the 3^d-point stencil on a structured grid."""

    def __init__(self, grid: StructuredGrid):
        self.grid = grid
        d, m = grid.dim, grid.n + 1
        # offsets in numpy-axis order (slowest first) -> ascending flat offsets
        self.deltas = list(itertools.product((-1, 0, 1), repeat=d))
        self.flat = [sum(dj * m ** (d - 1 - j) for j, dj in enumerate(delta)) for delta in self.deltas]
        ar = np.arange(m)
        self._axis_valid = {-1: ar >= 1, 0: np.ones(m, bool), 1: ar <= m - 2}
        counts = sum(self.valid(i).astype(np.int32) for i in range(len(self.deltas)))
        self.indptr = np.zeros(grid.n_nodes + 1, dtype=np.int32 if grid.n_nodes * 3**d < 2**31 else np.int64)
        np.cumsum(counts.ravel(), out=self.indptr[1:])
        self.nnz = int(self.indptr[-1])
        self.indices = np.empty(self.nnz, dtype=self.indptr.dtype)
        rows = np.arange(grid.n_nodes, dtype=self.indptr.dtype)
        for i, pos in enumerate(self.positions()):
            self.indices[pos] = rows[self.valid(i).ravel()] + self.flat[i]
        self.diag_pos = self.indptr[:-1] + (
            sum(self.valid(i).astype(np.int32) for i in range(len(self.deltas) // 2))
        ).ravel()

    def valid(self, i: int) -> np.ndarray:
        """Lattice mask of rows whose neighbour at offset ``deltas[i]`` exists."""
        d = self.grid.dim
        masks = [self._axis_valid[dj].reshape((-1,) + (1,) * (d - 1 - j)) for j, dj in enumerate(self.deltas[i])]
        out = masks[0]
        for mk in masks[1:]:
            out = out & mk
        return np.broadcast_to(out, self.grid.lattice_shape)

    def positions(self):
        """Yield CSR data positions of each offset's valid rows, in offset order."""
        running = np.zeros(self.grid.n_nodes, dtype=self.indptr.dtype)
        start = self.indptr[:-1]
        for i in range(len(self.deltas)):
            v = self.valid(i).ravel()
            yield start[v] + running[v]
            running += v

    def band_index(self, bits_row, bits_col) -> int:
        """Offset index of the entry coupling local nodes with the given bits."""
        d = self.grid.dim
        delta = np.asarray(bits_col) - np.asarray(bits_row)  # x first
        return int(sum((delta[d - 1 - j] + 1) * 3 ** (d - 1 - j) for j in range(d)))

    def pack(self, bands: np.ndarray) -> sp.csr_matrix:
        """Pack lattice bands ``(3^d, *lattice)`` into a CSR matrix on this pattern."""
        data = np.empty(self.nnz)
        for i, pos in enumerate(self.positions()):
            data[pos] = bands[i][self.valid(i)]
        return self.matrix(data)

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        n = self.grid.n_nodes
        mat = sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n), copy=False)
        mat.has_sorted_indices = True
        return mat


def _element_matrices(dim: int, h: float):
    """Reference element tensors scaled to cells of size h (q=2, exact here)."""
    rule = gauss_rule(2, dim)
    phi, dphi = shape_eval(rule.points)  # (nq, nloc), (nq, nloc, dim)
    w = rule.weights
    mass = h**dim * np.einsum("q,qa,qb->ab", w, phi, phi)
    stiff = h ** (dim - 2) * np.einsum("q,qak,qbk->ab", w, dphi, dphi)
    # directional[k][a, b] = (phi_b, d_k phi_a)
    directional = h ** (dim - 1) * np.einsum("q,qb,qak->kab", w, phi, dphi)
    # convection[k, m, a, b]: coefficient of w_{k,m} in c(w, phi_b, phi_a)
    conv = -h ** (dim - 1) * np.einsum("q,qm,qak,qb->kmab", w, phi, dphi, phi)
    conv -= 0.5 * h ** (dim - 1) * np.einsum("q,qmk,qa,qb->kmab", w, dphi, phi, phi)
    return mass, stiff, directional, conv


def _assemble_constant(pattern: StencilPattern, elem: np.ndarray) -> sp.csr_matrix:
    grid = pattern.grid
    bits = local_bits(grid.dim)
    bands = np.zeros((len(pattern.deltas),) + grid.lattice_shape)
    for slab in cell_slabs(grid, max_cells=grid.n_cells):
        for a, ba in enumerate(bits):
            sl = slab.node_slices(ba)
            for b, bb in enumerate(bits):
                bands[(pattern.band_index(ba, bb),) + sl] += elem[a, b]
    return pattern.pack(bands)


@dataclass
class OperatorSet:
    """Assembled operators for one grid and viscosity.

    ``L`` (Neumann pressure Laplacian) is the same matrix as ``A``: with equal
    order Q1 spaces both are the scalar stiffness matrix without boundary rows.
    """

    grid: StructuredGrid
    nu: float
    pattern: StencilPattern
    M: sp.csr_matrix
    M_lumped: np.ndarray
    A: sp.csr_matrix
    Mk: list
    conv_elem: np.ndarray

    @property
    def L(self) -> sp.csr_matrix:
        return self.A

    @property
    def dim(self) -> int:
        return self.grid.dim

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self.grid.boundary_mask


def assemble_operator_set(grid: StructuredGrid, nu: float) -> OperatorSet:
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    pattern = StencilPattern(grid)
    mass, stiff, directional, conv = _element_matrices(grid.dim, grid.h)
    M = _assemble_constant(pattern, mass)
    A = _assemble_constant(pattern, stiff)
    Mk = [_assemble_constant(pattern, directional[k]) for k in range(grid.dim)]
    return OperatorSet(grid=grid, nu=nu, pattern=pattern, M=M, M_lumped=lump(M), A=A, Mk=Mk, conv_elem=conv)


def lump(M: sp.spmatrix) -> np.ndarray:
    """Row sums of a square matrix (diagonal of the lumped mass matrix)."""
    if M.shape[0] != M.shape[1]:
        raise ValueError("lumping needs a square matrix")
    return np.asarray(M.sum(axis=1)).ravel()


def _as_field(ops: OperatorSet, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d, n = ops.dim, ops.grid.n_nodes
    if v.size != d * n:
        raise ValueError(f"velocity field has {v.size} entries, expected {d * n}")
    return v.reshape(d, n)


def _as_scalar(ops: OperatorSet, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (ops.grid.n_nodes,):
        raise ValueError(f"scalar field has shape {p.shape}, expected ({ops.grid.n_nodes},)")
    return p


def divergence_rhs(ops: OperatorSet, v) -> np.ndarray:
    """Entries ``(div v_h, phi_i)`` via the transpose action of the M_k."""
    v = _as_field(ops, v)
    out = np.zeros(ops.grid.n_nodes)
    for Mk, vl in zip(ops.Mk, v):
        out += Mk.T @ vl
    return out


def pressure_gradient_term(ops: OperatorSet, p) -> np.ndarray:
    """Block l holds ``(p_h, div(e_l phi_i)) = (M_l p)_i``."""
    p = _as_scalar(ops, p)
    return np.stack([Mk @ p for Mk in ops.Mk])


def convection_scalar_matrix(ops: OperatorSet, w) -> sp.csr_matrix:
    """Scalar block N_s(w) with ``N_s[i, j] = c(w_h, phi_j e_l, phi_i e_l)``.

    The convection operator is block diagonal with d copies of this block.
    """
    w = _as_field(ops, w)
    grid, pattern = ops.grid, ops.pattern
    d, nloc = grid.dim, 2**grid.dim
    bits = local_bits(d)
    G = ops.conv_elem.reshape(d * nloc, nloc * nloc)
    wl = w.reshape((d,) + grid.lattice_shape)
    bands = np.zeros((len(pattern.deltas),) + grid.lattice_shape)
    pairs = [(a, b, pattern.band_index(bits[a], bits[b])) for a in range(nloc) for b in range(nloc)]
    for slab in cell_slabs(grid):
        W = slab.gather(wl)  # (d, ncells, nloc)
        E = np.moveaxis(W, 0, 1).reshape(slab.n_cells, d * nloc) @ G
        E = E.reshape((slab.n_cells, nloc, nloc))
        for a, b, band in pairs:
            bands[(band,) + slab.node_slices(bits[a])] += E[:, a, b].reshape(slab.shape)
    return pattern.pack(bands)


def convection_matrix(ops: OperatorSet, w) -> sp.csr_matrix:
    """Block operator N(w) on the flattened velocity, ``(N v)_(l,i) = c(w, v, e_l phi_i)``."""
    block = convection_scalar_matrix(ops, w)
    return sp.block_diag([block] * ops.dim, format="csr")


def convection_residual(ops: OperatorSet, w) -> np.ndarray:
    """``c(w_h, w_h, e_l phi_i)`` by q=2 quadrature, shape ``(dim, n_nodes)``."""
    w = _as_field(ops, w)
    grid = ops.grid
    d = grid.dim
    quad = TensorQuadrature(grid, 2)
    wl = w.reshape((d,) + grid.lattice_shape)
    out = np.zeros((d,) + grid.lattice_shape)
    for slab in quad.slabs():
        wq = quad.evaluate(wl, slab)
        div = sum(quad.evaluate(wl[k], slab, deriv=k) for k in range(d))
        # -(w (x) w, grad chi) - 1/2 ((div w) w, chi)
        for k in range(d):
            quad.integrate(-wq[k] * wq, slab, out, deriv=k)
        quad.integrate(-0.5 * div * wq, slab, out)
    return out.reshape(d, -1)


def convection_residual_fast(ops: OperatorSet, w) -> np.ndarray:
    """Matrix-vector form of ``c*(w, w, e_l phi_i) = -(I_h(w (x) w), grad(e_l phi_i))``.

    Uses the d(d+1)/2 distinct entrywise products ``w^k o w^l``.
    """
    w = _as_field(ops, w)
    d = ops.dim
    prods = {(k, l): w[k] * w[l] for k, l in itertools.combinations_with_replacement(range(d), 2)}
    out = np.zeros_like(w)
    for l in range(d):
        for k in range(d):
            out[l] += ops.Mk[k] @ prods[min(k, l), max(k, l)]
    return FAST_CONVECTION_SIGN * out


def forcing_vector(ops: OperatorSet, f, t: float, q: int = 3) -> np.ndarray:
    """``(f(., t), e_l phi_i)`` by q-point Gauss quadrature, shape ``(dim, n_nodes)``.

    ``f`` is either a sequence of ``dim`` ``SeparableField`` components (already
    at time t; integrated per axis) or a callable ``f(xs, t)`` receiving
    broadcastable coordinate arrays ``(x, y[, z])`` and returning ``dim``
    component arrays.
    """
    grid = ops.grid
    d = grid.dim
    quad = TensorQuadrature(grid, q)
    if not callable(f):
        return np.stack([quad.load(c).ravel() for c in f])
    out = np.zeros((d,) + grid.lattice_shape)
    for slab in quad.slabs():
        xs = quad.coordinates(slab)
        shape = np.broadcast_shapes(*(x.shape for x in xs))
        fx = np.stack([np.broadcast_to(c, shape) for c in f(xs, t)])
        quad.integrate(fx, slab, out)
    return out.reshape(d, -1)


class InteriorMassInverse:
    """Exact inverse of the consistent mass matrix on interior nodes.

    On the uniform grid the mass matrix is the Kronecker product of 1D Q1
    mass matrices, and so is its interior block; applying the inverse is one
    tridiagonal solve per axis.  Boundary entries of the result are zero.
    """

    def __init__(self, grid):
        self.grid = grid
        m = grid.n - 1
        self.bands = np.zeros((2, m))
        self.bands[0, 1:] = grid.h / 6.0
        self.bands[1, :] = 2.0 * grid.h / 3.0
        self.inner = tuple(slice(1, -1) for _ in range(grid.dim))

    def __call__(self, r: np.ndarray) -> np.ndarray:
        grid = self.grid
        lead = r.shape[1:]
        X = r.reshape(grid.lattice_shape + lead)[self.inner]
        for axis in range(grid.dim):
            Xm = np.moveaxis(X, axis, 0)
            shape = Xm.shape
            flat = Xm.reshape(shape[0], -1)
            if shape[0] == 1:  # a single interior node per axis
                flat = flat / self.bands[1, 0]
            else:
                flat = scipy.linalg.solveh_banded(self.bands, flat)
            X = np.moveaxis(flat.reshape(shape), 0, axis)
        out = np.zeros(grid.lattice_shape + lead)
        out[self.inner] = X
        return out.reshape(r.shape)


def write_matrix_market(path, A: sp.spmatrix) -> None:
    """Dump a sparse matrix as MatrixMarket coordinate real general (1-based)."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), field="real", symmetry="general")
