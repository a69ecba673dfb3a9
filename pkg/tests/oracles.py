"""Brute-force reference computations, independent of the production kernels.

Everything here loops over cells with explicit per-cell quadrature built
from ``shape_eval`` and dense matrices, so it shares no code path with the
stencil-band assembly or the sum-factorized quadrature it checks.
"""

import numpy as np

from ipcs.fem import gauss_rule, shape_eval


def cell_quadrature(grid, q):
    """Yield (node indices, physical points, weights, phi, physical grads) per cell."""
    rule = gauss_rule(q, grid.dim)
    phi, dphi = shape_eval(rule.points)
    conn = grid.cell_nodes()
    corners = grid.coordinates()[conn[:, 0]]
    for c in range(grid.n_cells):
        pts = corners[c] + grid.h * rule.points
        yield conn[c], pts, rule.weights * grid.h**grid.dim, phi, dphi / grid.h


def dense_operators(grid, q=2):
    """Dense mass, stiffness and directional matrices by cell loops."""
    n, d = grid.n_nodes, grid.dim
    M = np.zeros((n, n))
    A = np.zeros((n, n))
    Mk = np.zeros((d, n, n))
    for nodes, _, w, phi, g in cell_quadrature(grid, q):
        ix = np.ix_(nodes, nodes)
        M[ix] += np.einsum("q,qa,qb->ab", w, phi, phi)
        A[ix] += np.einsum("q,qak,qbk->ab", w, g, g)
        for k in range(d):
            Mk[k][ix] += np.einsum("q,qb,qa->ab", w, phi, g[:, :, k])
    return M, A, Mk


def dense_convection(grid, w, q=2):
    """Dense scalar block with N[i, j] = -((w.grad phi_i), phi_j) - 1/2 ((div w) phi_j, phi_i)."""
    n = grid.n_nodes
    N = np.zeros((n, n))
    for nodes, _, wt, phi, g in cell_quadrature(grid, q):
        W = w[:, nodes]  # (d, nloc)
        wq = phi @ W.T  # (nq, d)
        div = np.einsum("qnk,kn->q", g, W)
        adv = np.einsum("qk,qak->qa", wq, g)
        N[np.ix_(nodes, nodes)] += -np.einsum("q,qa,qb->ab", wt, adv, phi) - 0.5 * np.einsum(
            "q,q,qa,qb->ab", wt, div, phi, phi
        )
    return N


def advective_convection(grid, w, v, q=2):
    """((w.grad) v, e_l phi_i) + 1/2 ((div w) v, e_l phi_i), shape (d, n_nodes)."""
    out = np.zeros((grid.dim, grid.n_nodes))
    for nodes, _, wt, phi, g in cell_quadrature(grid, q):
        W, V = w[:, nodes], v[:, nodes]
        wq = phi @ W.T
        gv = np.einsum("ln,qnk->qlk", V, g)  # grad of each component
        div = np.einsum("qnk,kn->q", g, W)
        vq = phi @ V.T
        integrand = np.einsum("qk,qlk->ql", wq, gv) + 0.5 * div[:, None] * vq
        out[:, nodes] += np.einsum("q,ql,qa->la", wt, integrand, phi)
    return out


def interpolated_tensor_convection(grid, w, q=2):
    """-(I_h(w (x) w), grad(e_l phi_i)) by cell quadrature, shape (d, n_nodes)."""
    d = grid.dim
    out = np.zeros((d, grid.n_nodes))
    for nodes, _, wt, phi, g in cell_quadrature(grid, q):
        W = w[:, nodes]
        T = np.einsum("kn,ln,qn->qkl", W, W, phi)  # interpolant of nodal products
        out[:, nodes] -= np.einsum("q,qkl,qak->la", wt, T, g)
    return out


def load_vector(grid, f, t, q):
    """(f, e_l phi_i) with f taking (m, d) points."""
    out = np.zeros((grid.dim, grid.n_nodes))
    for nodes, pts, wt, phi, _ in cell_quadrature(grid, q):
        out[:, nodes] += np.einsum("q,ql,qa->la", wt, f(pts, t), phi)
    return out


def l2_error(grid, values, exact, t, q=3):
    """sqrt(sum_cells int |exact - u_h|^2); values (d, n) or (n,), exact on (m, d) points."""
    vals = np.atleast_2d(values)
    total = 0.0
    for nodes, pts, wt, phi, _ in cell_quadrature(grid, q):
        uh = phi @ vals[:, nodes].T
        ex = np.asarray(exact(pts, t)).reshape(len(pts), -1)
        total += np.sum(wt[:, None] * (ex - uh) ** 2)
    return np.sqrt(total)


def h1_error(grid, values, exact_grad, t, q=3):
    """|exact - u_h|_1 with exact_grad returning (m, d, d) (or (m, d) for scalars)."""
    vals = np.atleast_2d(values)
    total = 0.0
    for nodes, pts, wt, _, g in cell_quadrature(grid, q):
        gh = np.einsum("ln,qnk->qlk", vals[:, nodes], g)
        ex = np.asarray(exact_grad(pts, t)).reshape(gh.shape)
        total += np.sum(wt[:, None, None] * (ex - gh) ** 2)
    return np.sqrt(total)


def dense_step(grid, case, u, u_tilde, p, k, t):
    """One implicit pressure-correction step by dense direct solves.

    Returns (u_tilde_new, dp, p_new, u_new); pressure normalized to zero
    lumped-mass mean, correction on interior nodes only.
    """
    d = grid.dim
    M, A, Mk = dense_operators(grid)
    N = dense_convection(grid, u_tilde)
    F = load_vector(grid, case.forcing, t, 3)
    K = M / k + case.nu * A + N
    b = np.stack([M @ u[l] / k + F[l] + Mk[l] @ p for l in range(d)])
    bnd = np.flatnonzero(grid.boundary_mask)
    inner = ~grid.boundary_mask
    K[bnd] = 0.0
    K[bnd, bnd] = 1.0
    b[:, bnd] = case.exact_velocity(grid.coordinates()[bnd], t).T
    ut = np.linalg.solve(K, b.T).T

    rhs = -sum(Mk[l].T @ ut[l] for l in range(d)) / k
    rhs -= rhs.mean()
    ml = M.sum(axis=1)
    dp = np.linalg.lstsq(A, rhs, rcond=None)[0]
    dp -= ml @ dp / ml.sum()
    p_new = p + dp
    p_new -= ml @ p_new / ml.sum()

    u_new = ut.copy()
    for l in range(d):
        u_new[l, inner] += np.linalg.solve(M[np.ix_(inner, inner)], k * (Mk[l] @ dp)[inner])
    return ut, dp, p_new, u_new


class ZeroCase:
    """Zero solution with zero forcing, in the ManufacturedCase interface."""

    def __init__(self, dim, nu=1e-3):
        self.dim, self.nu = dim, nu

    def exact_velocity(self, x, t):
        return np.zeros((len(x), self.dim))

    def exact_pressure(self, x, t):
        return np.zeros(len(x))

    def fields(self, t):
        from ipcs.mms import ExactFields
        from ipcs.separable import SeparableField

        zero = SeparableField.constant(0.0, self.dim)
        return ExactFields(t, [zero] * self.dim, None, None, zero, None, [zero] * self.dim)
