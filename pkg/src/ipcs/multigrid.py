"""Geometric multigrid V-cycle for the pure-Neumann Q1 Laplacian.

Used as a CG preconditioner for the pressure Poisson step.  Coarse
operators are the Q1 stiffness matrices of the coarser grids, which equal
the Galerkin products ``P^T A P`` for nested Q1 spaces.  Smoothing is
damped Jacobi with equal pre/post sweeps, so the cycle is symmetric.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ipcs.grid import StructuredGrid
from ipcs.operators import StencilPattern, _assemble_constant, _element_matrices

COARSEST_NODES = 4096


def prolongation_1d(n_coarse: int) -> sp.csr_matrix:
    """Linear interpolation from n_coarse to 2 n_coarse cells on [0, 1]."""
    rows, cols, vals = [], [], []
    for i in range(2 * n_coarse + 1):
        if i % 2 == 0:
            rows.append(i), cols.append(i // 2), vals.append(1.0)
        else:
            rows += [i, i]
            cols += [i // 2, i // 2 + 1]
            vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n_coarse + 1, n_coarse + 1))


def prolongation(dim: int, n_coarse: int) -> sp.csr_matrix:
    P1 = prolongation_1d(n_coarse)
    P = P1
    for _ in range(dim - 1):
        P = sp.kron(P1, P, format="csr")
    return P


def stiffness_matrix(grid: StructuredGrid) -> sp.csr_matrix:
    _, stiff, _, _ = _element_matrices(grid.dim, grid.h)
    return _assemble_constant(StencilPattern(grid), stiff)


class NeumannMultigrid:
    """V-cycle preconditioner; call it on a residual (vector or columns)."""

    def __init__(self, grid: StructuredGrid, A_fine: sp.csr_matrix | None = None, sweeps: int = 2, omega: float = 0.8):
        self.sweeps = sweeps
        self.omega = omega
        self.levels = []  # (A, inverse diagonal, prolongation from next coarser)
        g = grid
        A = stiffness_matrix(g) if A_fine is None else A_fine
        while g.n % 2 == 0 and g.n > 2 and g.n_nodes > 27:
            coarse = StructuredGrid(g.dim, g.n // 2)
            self.levels.append((A, 1.0 / A.diagonal(), prolongation(g.dim, coarse.n)))
            g = coarse
            A = stiffness_matrix(g)
        if g.n_nodes > COARSEST_NODES:
            raise ValueError(f"coarsest multigrid level has {g.n_nodes} nodes; use a grid with n = c 2^k")
        self.coarse_inverse = np.linalg.pinv(A.toarray())

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self._cycle(0, r)

    def _cycle(self, level: int, r: np.ndarray) -> np.ndarray:
        if level == len(self.levels):
            return self.coarse_inverse @ r
        A, dinv, P = self.levels[level]
        if r.ndim == 2:
            dinv = dinv[:, None]
        x = self.omega * dinv * r
        for _ in range(self.sweeps - 1):
            x += self.omega * dinv * (r - A @ x)
        x += P @ self._cycle(level + 1, P.T @ (r - A @ x))
        for _ in range(self.sweeps):
            x += self.omega * dinv * (r - A @ x)
        return x
