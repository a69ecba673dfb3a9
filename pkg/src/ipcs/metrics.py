"""Error norms against the exact solution and time-composite norms.

Spatial errors integrate the analytic solution with q=3 Gauss quadrature.
An exact solution given as ``SeparableField`` components is handled by
expanding ``|u - u_h|^2``: exact-exact integrals factor per axis, the cross
term is a load vector dotted with the nodal values, and the discrete part
is a tensor-product Gram form.  Callables go through full quadrature
lattices (slow, kept as the general path).  Composite norms
are the time-discrete ``(sum_n k e_n^p)^(1/p)`` over steps 1..M; the
interpolated initial data (step 0) is never part of a series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ipcs.fem import TensorQuadrature
from ipcs.grid import StructuredGrid
from ipcs.separable import SeparableField

ERROR_QUADRATURE = 3


def _as_components(values, grid: StructuredGrid) -> np.ndarray:
    vals = np.asarray(values, dtype=float)
    return vals.reshape((-1,) + grid.lattice_shape)


def _component_list(out, n: int) -> list:
    if n == 1 and not isinstance(out, (list, tuple)):
        return [out]
    return list(out)


def _squared_error(quad: TensorQuadrature, exact: SeparableField, U: np.ndarray, deriv=None) -> float:
    val = quad.inner(exact, exact) - 2.0 * float(np.sum(quad.load(exact, deriv) * U)) + quad.gram(U, deriv)
    return max(val, 0.0)  # cancellation can leave tiny negative values


def spatial_error(values, exact, grid: StructuredGrid, t: float, norm: str = "L2", q: int = ERROR_QUADRATURE) -> float:
    """``||exact - u_h||_0`` (norm="L2") or ``|exact - u_h|_1`` (norm="H1").

    ``values`` is a nodal field, ``(n_nodes,)`` or ``(dim, n_nodes)``.
    ``exact`` is either separable (a ``SeparableField`` or a list of them per
    component; for "H1" the gradient, per component a list over directions)
    already at time t, or a callable ``exact(xs, t)`` on broadcastable
    coordinates returning the same structure as arrays.
    """
    if norm not in ("L2", "H1"):
        raise ValueError(f"unknown norm {norm!r}")
    U = _as_components(values, grid)
    ncomp = U.shape[0]
    quad = TensorQuadrature(grid, q)
    if not callable(exact):
        ex = [exact] if isinstance(exact, SeparableField) or (norm == "H1" and ncomp == 1) else list(exact)
        total = 0.0
        for c in range(ncomp):
            if norm == "L2":
                total += _squared_error(quad, ex[c], U[c])
            else:
                total += sum(_squared_error(quad, ex[c][k], U[c], k) for k in range(grid.dim))
        return math.sqrt(total)
    total = 0.0
    for slab in quad.slabs():
        xs = quad.coordinates(slab)
        wt = quad.weights(slab)
        ex = _component_list(exact(xs, t), ncomp)
        for c in range(ncomp):
            if norm == "L2":
                diff = ex[c] - quad.evaluate(U[c], slab)
                total += float(np.sum(wt * diff**2))
            else:
                grads = ex[c] if ncomp > 1 else ex
                for k in range(grid.dim):
                    diff = grads[k] - quad.evaluate(U[c], slab, deriv=k)
                    total += float(np.sum(wt * diff**2))
    return math.sqrt(total)


def integral(values, grid: StructuredGrid, q: int = ERROR_QUADRATURE, exact=None, t: float = 0.0) -> float:
    """``int u_h`` for a nodal scalar, or ``int exact`` when ``exact`` is given."""
    quad = TensorQuadrature(grid, q)
    if exact is None:
        U = _as_components(values, grid)[0]
        return float(np.sum(quad.load(SeparableField.constant(1.0, grid.dim)) * U))
    if isinstance(exact, SeparableField):
        return quad.integral(exact)
    total = 0.0
    for slab in quad.slabs():
        xs = quad.coordinates(slab)
        vals = np.broadcast_to(exact(xs, t), np.broadcast_shapes(*(x.shape for x in xs)))
        total += float(np.sum(quad.weights(slab) * vals))
    return total


def pressure_error(p_h, exact_p, grid: StructuredGrid, t: float, q: int = ERROR_QUADRATURE) -> float:
    """L2 error after shifting both pressures to zero mean over the unit domain."""
    shift = integral(None, grid, q, exact=exact_p, t=t) - integral(p_h, grid, q)
    if isinstance(exact_p, SeparableField):
        quad = TensorQuadrature(grid, q)
        sq = _squared_error(quad, exact_p, _as_components(p_h, grid)[0]) - shift**2
        return math.sqrt(max(sq, 0.0))
    return spatial_error(p_h, lambda xs, s: exact_p(xs, s) - shift, grid, t, "L2", q)


def composite_norm(values, k: float, mode: str = "L2") -> float:
    """Time-discrete ``L2(0,T;X)`` (sqrt(k sum e_n^2)) or ``Linf(0,T;X)`` (max) norm."""
    e = np.asarray(values, dtype=float)
    if e.size == 0:
        raise ValueError("composite norm of an empty error series")
    if mode == "L2":
        return math.sqrt(k) * math.hypot(*e)  # hypot scales, so huge blow-up errors do not overflow
    if mode == "Linf":
        return float(np.max(e))
    raise ValueError(f"unknown composite norm mode {mode!r}")


def convergence_rate(e_coarse: float, e_fine: float) -> float:
    """Observed order for a refinement by a factor of two."""
    if e_coarse <= 0 or e_fine <= 0:
        raise ValueError("convergence rate needs positive errors")
    return math.log2(e_coarse / e_fine)


@dataclass
class ErrorReport:
    k: float
    meta: dict = field(default_factory=dict)
    t: list = field(default_factory=list)
    err_l2_pred: list = field(default_factory=list)
    err_h1_pred: list = field(default_factory=list)
    err_l2_end: list = field(default_factory=list)
    err_l2_pres: list = field(default_factory=list)

    def append(self, t: float, l2_pred: float, h1_pred: float, l2_end: float, l2_pres: float) -> None:
        self.t.append(t)
        self.err_l2_pred.append(l2_pred)
        self.err_h1_pred.append(h1_pred)
        self.err_l2_end.append(l2_end)
        self.err_l2_pres.append(l2_pres)

    def composites(self) -> dict:
        return {
            "err_l2l2_pred": composite_norm(self.err_l2_pred, self.k, "L2"),
            "err_l2h1_pred": composite_norm(self.err_h1_pred, self.k, "L2"),
            "err_linfl2_pred": composite_norm(self.err_l2_pred, self.k, "Linf"),
            "err_l2l2_end": composite_norm(self.err_l2_end, self.k, "L2"),
            "err_l2l2_pres": composite_norm(self.err_l2_pres, self.k, "L2"),
        }


def step_errors(case, grid: StructuredGrid, u_tilde, u, p, t: float) -> tuple[float, float, float, float]:
    """(L2 and H1 predictor error, L2 end-step error, L2 pressure error) at time t."""
    ex = case.fields(t)
    return (
        spatial_error(u_tilde, ex.u, grid, t, "L2"),
        spatial_error(u_tilde, ex.grad_u, grid, t, "H1"),
        spatial_error(u, ex.u, grid, t, "L2"),
        pressure_error(p, ex.p, grid, t),
    )
