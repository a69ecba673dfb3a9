"""Sparse linear algebra: CSR products, CG, BiCGStab, zero-mean projection.

Matrices are ``scipy.sparse.csr_matrix``.  The Krylov solvers accept a
right-hand side of shape ``(n,)`` or ``(n, m)``; columns are independent
systems sharing one operator and are iterated in lockstep so each matrix
pass serves all components of a velocity field.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

Preconditioner = Union[str, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int = 5000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float  # largest column residual norm
    converged: bool


def spmv(A: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"cannot apply {A.shape} matrix to vector of length {x.shape[0]}")
    return A @ x


def spmv_transpose(A: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    if A.shape[0] != x.shape[0]:
        raise ValueError(f"cannot apply transpose of {A.shape} matrix to vector of length {x.shape[0]}")
    return A.T @ x


def project_zero_mean(p: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Subtract the weighted mean ``sum(w p) / sum(w)``."""
    total = float(np.sum(weights))
    if total <= 0:
        raise ValueError("weights must have a positive sum")
    return p - np.dot(weights, p) / total


def _operator(A) -> Callable[[np.ndarray], np.ndarray]:
    if callable(A) and not sp.issparse(A):
        return A
    return lambda x: A @ x


def _preconditioner(A, precond: Preconditioner, diag=None):
    if callable(precond):
        return precond
    if precond == "none":
        return lambda r: r
    if precond == "jacobi":
        if diag is None:
            if not sp.issparse(A):
                raise ValueError("jacobi preconditioning of a matrix-free operator needs diag=")
            diag = A.diagonal()
        inv = 1.0 / np.where(diag != 0, diag, 1.0)
        return lambda r: r * (inv[:, None] if r.ndim == 2 else inv)
    raise ValueError(f"unknown preconditioner {precond!r}")


def _columns(b, x0):
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    B = b.reshape(b.shape[0], -1)
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(B.shape)
    return single, B, X


def _coldot(a, b):
    return np.einsum("ij,ij->j", a, b)


def cg(A, b, x0=None, cfg: SolverConfig = SolverConfig(), precond: Preconditioner = "jacobi", diag=None):
    """Preconditioned conjugate gradients for symmetric positive (semi)definite A.

    For a singular A the caller must supply a consistent right-hand side;
    the iterates then converge in the energy seminorm.
    """
    matvec = _operator(A)
    apply_m = _preconditioner(A, precond, diag)
    single, B, X = _columns(b, x0)
    thresh = np.maximum(cfg.rel_tol * np.linalg.norm(B, axis=0), cfg.abs_tol)
    R = B - matvec(X) if np.any(X) else B.copy()
    rnorm = np.linalg.norm(R, axis=0)
    active = rnorm > thresh
    it = 0
    if active.any():
        Z = apply_m(R)
        P = Z.copy()
        rz = _coldot(R, Z)
        while it < cfg.max_iter:
            it += 1
            AP = matvec(P)
            pap = _coldot(P, AP)
            ok = active & (pap > 0)
            alpha = np.where(ok, rz / np.where(ok, pap, 1.0), 0.0)
            X += alpha * P
            R -= alpha * AP
            rnorm = np.where(active, np.linalg.norm(R, axis=0), rnorm)
            active &= (rnorm > thresh) & ok
            if not active.any():
                break
            Z = apply_m(R)
            rz_new = _coldot(R, Z)
            beta = np.where(active, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
            P = Z + beta * P
            rz = rz_new
    converged = bool(np.all((rnorm <= thresh) & np.isfinite(rnorm)))
    report = SolveReport(it, float(rnorm.max(initial=0.0)), converged)
    if not converged:
        log.warning("cg stopped after %d iterations, residual %.3e", it, report.residual)
    return (X[:, 0] if single else X), report


def bicgstab(A, b, x0=None, cfg: SolverConfig = SolverConfig(), precond: Preconditioner = "jacobi", diag=None):
    """Right-preconditioned BiCGStab for general square A.

    A breakdown (vanishing ``rho`` or ``omega``) freezes the affected column
    and is reported as non-convergence.
    """
    matvec = _operator(A)
    apply_m = _preconditioner(A, precond, diag)
    single, B, X = _columns(b, x0)
    thresh = np.maximum(cfg.rel_tol * np.linalg.norm(B, axis=0), cfg.abs_tol)
    R = B - matvec(X) if np.any(X) else B.copy()
    rnorm = np.linalg.norm(R, axis=0)
    active = rnorm > thresh
    broken = np.zeros_like(active)
    tiny = np.finfo(float).tiny * 1e10
    R0 = R.copy()
    P = np.zeros_like(R)
    V = np.zeros_like(R)
    rho = alpha = omega = np.ones(R.shape[1])
    it = 0
    while active.any() and it < cfg.max_iter:
        it += 1
        rho_new = _coldot(R0, R)
        bad = active & (np.abs(rho_new) < tiny * np.maximum(rnorm, 1.0))
        broken |= bad
        active &= ~bad
        if not active.any():
            break
        beta = np.where(active, (rho_new / np.where(rho != 0, rho, 1.0)) * (alpha / np.where(omega != 0, omega, 1.0)), 0.0)
        P = np.where(active, R + beta * (P - omega * V), P)
        Ph = apply_m(P)
        V = matvec(Ph)
        r0v = _coldot(R0, V)
        bad = active & (np.abs(r0v) < tiny)
        broken |= bad
        active &= ~bad
        alpha = np.where(active, rho_new / np.where(r0v != 0, r0v, 1.0), 0.0)
        S = R - alpha * V
        snorm = np.linalg.norm(S, axis=0)
        done = active & (snorm <= thresh)
        X += np.where(active, alpha, 0.0) * Ph
        R = np.where(done, S, R)
        rnorm = np.where(done, snorm, rnorm)
        active &= ~done
        if not active.any():
            break
        Sh = apply_m(S)
        T = matvec(Sh)
        tt = _coldot(T, T)
        omega = np.where(active & (tt > 0), _coldot(T, S) / np.where(tt > 0, tt, 1.0), 0.0)
        X += omega * Sh
        R = np.where(active, S - omega * T, R)
        rnorm = np.where(active, np.linalg.norm(R, axis=0), rnorm)
        bad = active & (omega == 0) & (rnorm > thresh)
        broken |= bad
        active &= ~bad & (rnorm > thresh)
        rho = rho_new
    converged = bool(np.all((rnorm <= thresh) & np.isfinite(rnorm))) and not broken.any()
    report = SolveReport(it, float(rnorm.max(initial=0.0)), converged)
    if not converged:
        log.warning("bicgstab stopped after %d iterations (breakdown=%s), residual %.3e", it, bool(broken.any()), report.residual)
    return (X[:, 0] if single else X), report
