"""Incremental pressure-correction time stepping.

One step is: momentum predictor (implicit, explicit, or explicit-star),
pressure Poisson update for the increment, velocity correction.  Velocity
Dirichlet data are imposed strongly on the predictor; the corrected
velocity keeps the predictor's boundary values and is only corrected on
interior nodes.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace

import numpy as np

from ipcs.fem import nodal_interpolate
from ipcs.krylov import SolveReport, SolverConfig, bicgstab, cg, project_zero_mean
from ipcs.mms import ManufacturedCase
from ipcs.multigrid import NeumannMultigrid
from ipcs.operators import (
    InteriorMassInverse,
    OperatorSet,
    convection_residual,
    convection_residual_fast,
    convection_scalar_matrix,
    divergence_rhs,
    forcing_vector,
    pressure_gradient_term,
)

log = logging.getLogger(__name__)


class SchemeKind(str, enum.Enum):
    IMPLICIT = "implicit"
    EXPLICIT = "explicit"
    EXPLICIT_STAR = "explicit-star"


class SolverFailure(RuntimeError):
    def __init__(self, what: str, step: int, report: SolveReport | None = None):
        detail = f"{what} solve failed: {report}" if report is not None else f"non-finite {what}"
        super().__init__(f"step {step}: {detail}")
        self.step = step
        self.report = report


@dataclass
class SchemeState:
    u: np.ndarray  # end-step velocity, (dim, n_nodes)
    u_tilde: np.ndarray  # predictor velocity, (dim, n_nodes)
    p: np.ndarray  # pressure, lumped-mass mean zero
    t: float
    step: int
    k: float


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    t: float
    theta_visc: float
    theta_conv: float
    cfl_adv: float
    momentum: SolveReport | None = None
    poisson: SolveReport | None = None
    correction: SolveReport | None = None

    def record(self) -> dict:
        return {
            "step": self.step,
            "t": self.t,
            "theta_visc": self.theta_visc,
            "theta_conv": self.theta_conv,
            "cfl_adv": self.cfl_adv,
            "mom_iters": self.momentum.iterations if self.momentum else 0,
            "poisson_iters": self.poisson.iterations if self.poisson else 0,
        }


def max_speed(v: np.ndarray) -> float:
    """Largest nodal Euclidean velocity magnitude."""
    return float(np.sqrt(np.max(np.sum(v * v, axis=0))))


def restriction_terms(k: float, h: float, nu: float, speed: float, c_inv: float = 1.0) -> tuple[float, float, float]:
    """(k nu c_inv^2 / h^2, k speed^2 / (4 nu), k speed / h)."""
    return k * nu * c_inv**2 / h**2, k * speed**2 / (4.0 * nu), k * speed / h


class PressureCorrection:
    """Pressure-correction solver for one operator set and manufactured case."""

    def __init__(
        self,
        ops: OperatorSet,
        case: ManufacturedCase,
        kind: SchemeKind | str = SchemeKind.EXPLICIT_STAR,
        *,
        c_inv: float = 1.0,
        momentum_cfg: SolverConfig = SolverConfig(),
        poisson_cfg: SolverConfig = SolverConfig(),
        mass_cfg: SolverConfig = SolverConfig(),
        poisson_precond: str = "multigrid",
    ):
        self.ops = ops
        self.case = case
        self.kind = SchemeKind(kind)
        self.c_inv = c_inv
        self.momentum_cfg = momentum_cfg
        self.poisson_cfg = poisson_cfg
        self.mass_cfg = mass_cfg
        grid = ops.grid
        self.bnodes = np.flatnonzero(grid.boundary_mask)
        self.bcoords = grid.coordinates()[self.bnodes]
        self.interior = (~grid.boundary_mask).astype(float)
        self._mass_precond = InteriorMassInverse(grid)
        self.grid_boundary = grid.boundary_mask.astype(float)
        if poisson_precond == "multigrid":
            try:
                self._poisson_precond = NeumannMultigrid(grid, ops.L)
            except ValueError:
                log.info("no multigrid hierarchy for n=%d, using jacobi", grid.n)
                self._poisson_precond = "jacobi"
        else:
            self._poisson_precond = poisson_precond
        if self.kind is SchemeKind.IMPLICIT:
            pat = ops.pattern
            row_of = np.repeat(np.arange(grid.n_nodes), np.diff(pat.indptr))
            self._dirichlet_entries = np.flatnonzero(grid.boundary_mask[row_of])
            self._dirichlet_diag = pat.diag_pos[self.bnodes]

    @property
    def dim(self) -> int:
        return self.ops.dim

    def boundary_values(self, t: float) -> np.ndarray:
        """Exact velocity at boundary nodes, ``(n_boundary, dim)``."""
        return self.case.exact_velocity(self.bcoords, t)

    # ------------------------------------------------------------------ steps

    def initialize(self, k: float) -> SchemeState:
        grid = self.ops.grid
        u0 = nodal_interpolate(self.case.exact_velocity, grid, 0.0)
        p0 = project_zero_mean(nodal_interpolate(self.case.exact_pressure, grid, 0.0), self.ops.M_lumped)
        return SchemeState(u=u0, u_tilde=u0.copy(), p=p0, t=0.0, step=0, k=k)

    def _explicit_rhs_parts(self, state: SchemeState, t_new: float) -> np.ndarray:
        return forcing_vector(self.ops, self.case.fields(t_new).f, t_new) + pressure_gradient_term(self.ops, state.p)

    def momentum_implicit(self, state: SchemeState) -> tuple[np.ndarray, SolveReport]:
        """Solve [M/k + nu A + N(u_tilde^{n-1})] u_tilde^n = M u^{n-1}/k + F^n + G p^{n-1}."""
        ops, k = self.ops, state.k
        t_new = (state.step + 1) * k
        N = convection_scalar_matrix(ops, state.u_tilde)
        data = N.data
        data += ops.M.data / k
        data += ops.nu * ops.A.data
        data[self._dirichlet_entries] = 0.0
        data[self._dirichlet_diag] = 1.0
        rhs = (ops.M @ state.u.T) / k + self._explicit_rhs_parts(state, t_new).T
        rhs[self.bnodes] = self.boundary_values(t_new)
        bmask = self.grid_boundary[:, None]

        def precond(r):
            # k M_II^{-1} on interior rows, identity on the Dirichlet rows
            return k * self._mass_precond(r) + bmask * r

        x, report = bicgstab(N, rhs, x0=state.u_tilde.T, cfg=self.momentum_cfg, precond=precond)
        if not report.converged:
            raise SolverFailure("momentum", state.step + 1, report)
        return np.ascontiguousarray(x.T), report

    def _interior_mass_solve(self, rhs: np.ndarray, x0=None) -> tuple[np.ndarray, SolveReport]:
        """Solve M_II x_I = rhs_I with x = 0 on boundary nodes (columns of ``rhs``)."""
        M, mask = self.ops.M, self.interior[:, None]
        x, report = cg(
            lambda X: mask * (M @ (mask * X)),
            mask * rhs,
            x0=None if x0 is None else mask * x0,
            cfg=self.mass_cfg,
            precond=self._mass_precond,
        )
        return x, report

    def momentum_explicit(self, state: SchemeState, kind: SchemeKind | None = None) -> tuple[np.ndarray, SolveReport | None]:
        """M (u_tilde^n - u^{n-1}) = k [F^n - nu A u_tilde^{n-1} - C(u_tilde^{n-1}) + G p^{n-1}].

        ``C`` is the quadrature convection (explicit, consistent mass) or its
        interpolated matrix-vector form (explicit-star, lumped mass).  Only
        interior rows are solved; boundary nodes take the Dirichlet data.
        """
        ops, k = self.ops, state.k
        kind = SchemeKind(kind or self.kind)
        t_new = (state.step + 1) * k
        w = state.u_tilde
        conv = convection_residual_fast(ops, w) if kind is SchemeKind.EXPLICIT_STAR else convection_residual(ops, w)
        rhs = (self._explicit_rhs_parts(state, t_new) - conv - ops.nu * (ops.A @ w.T).T).T
        g = self.boundary_values(t_new)
        report = None
        if kind is SchemeKind.EXPLICIT_STAR:
            x = state.u.T + k * rhs / ops.M_lumped[:, None]
        else:
            lift = np.zeros_like(rhs)
            lift[self.bnodes] = g
            rhs = ops.M @ (state.u.T - lift) + k * rhs
            x, report = self._interior_mass_solve(rhs, x0=w.T)
            if not report.converged:
                raise SolverFailure("mass", state.step + 1, report)
            x += lift
        x[self.bnodes] = g
        return np.ascontiguousarray(x.T), report

    def pressure_update(self, state: SchemeState, u_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray, SolveReport]:
        """Neumann problem L dp = -(1/k) (div u_tilde, phi); returns (p^n, dp, report)."""
        ops = self.ops
        b = -divergence_rhs(ops, u_tilde) / state.k
        b -= b.mean()  # compatibility with the constant null space
        dp, report = cg(ops.L, b, cfg=self.poisson_cfg, precond=self._poisson_precond)
        if not report.converged:
            raise SolverFailure("pressure", state.step + 1, report)
        dp = project_zero_mean(dp, ops.M_lumped)
        return project_zero_mean(state.p + dp, ops.M_lumped), dp, report

    def velocity_correction(
        self, state: SchemeState, u_tilde: np.ndarray, dp: np.ndarray, kind: SchemeKind | None = None
    ) -> tuple[np.ndarray, SolveReport | None]:
        """M (u^n - u_tilde^n) = k G dp on interior nodes; boundary values stay."""
        ops = self.ops
        kind = SchemeKind(kind or self.kind)
        rhs = state.k * pressure_gradient_term(ops, dp).T * self.interior[:, None]
        report = None
        if kind is SchemeKind.EXPLICIT_STAR:
            inc = rhs / ops.M_lumped[:, None]
        else:
            inc, report = self._interior_mass_solve(rhs)
            if not report.converged:
                raise SolverFailure("correction", state.step + 1, report)
        return u_tilde + inc.T, report

    def diagnostics(self, state: SchemeState) -> StepDiagnostics:
        theta_visc, theta_conv, cfl = restriction_terms(
            state.k, self.ops.grid.h, self.ops.nu, max_speed(state.u_tilde), self.c_inv
        )
        return StepDiagnostics(state.step + 1, (state.step + 1) * state.k, theta_visc, theta_conv, cfl)

    def advance(self, state: SchemeState) -> tuple[SchemeState, StepDiagnostics]:
        diag = self.diagnostics(state)
        if diag.cfl_adv > 1.0:
            log.info("step %d: cfl_adv = %.3g exceeds 1", diag.step, diag.cfl_adv)
        if self.kind is SchemeKind.IMPLICIT:
            u_tilde, mom = self.momentum_implicit(state)
        else:
            u_tilde, mom = self.momentum_explicit(state)
        p, dp, poisson = self.pressure_update(state, u_tilde)
        u, corr = self.velocity_correction(state, u_tilde, dp)
        if not (np.isfinite(u).all() and np.isfinite(p).all()):
            raise SolverFailure("velocity or pressure", diag.step)
        new = SchemeState(u=u, u_tilde=u_tilde, p=p, t=diag.t, step=state.step + 1, k=state.k)
        return new, replace(diag, momentum=mom, poisson=poisson, correction=corr)
