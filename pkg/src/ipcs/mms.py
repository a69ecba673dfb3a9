"""Manufactured exact solutions and their closed-form forcing.

Each case builds its fields at time t as ``SeparableField`` sums of
products of per-axis sines and cosines (``fields(t)``).  Quadrature-based
metrics and load vectors use that form directly.  Broadcast methods
(``u(xs, t)``, ``grad_u``, ...) take a tuple of broadcastable coordinate
arrays ``(x, y[, z])`` and return lists of component arrays; the
``exact_*`` / ``forcing`` methods take points of shape ``(m, dim)`` and
return stacked arrays.

The forcing is ``f = du/dt - nu Lap(u) + (u . grad) u + grad p`` (the
convective term equals ``div(u (x) u)`` because ``div u = 0``).  For both
cases ``Lap(u)`` is a constant multiple of ``u``.  The test suite checks
every closed form against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ipcs.separable import SeparableField, cos_factor, sin_factor

PRESSURE_SHIFT_3D = 8.0 * np.sin(0.5) ** 3
PRESSURE_SHIFT_2D = 4.0 * np.sin(0.5) ** 2


@dataclass(frozen=True)
class ExactFields:
    t: float
    u: list
    grad_u: list  # grad_u[i][j] = d u_i / d x_j
    dudt: list
    p: SeparableField
    grad_p: list
    f: list


class ManufacturedCase:
    dim: int
    laplacian_factor: float

    def __init__(self, nu: float = 1e-3):
        self.nu = nu
        self._cache: ExactFields | None = None

    def _build(self, t: float) -> dict:
        raise NotImplementedError

    def fields(self, t: float) -> ExactFields:
        t = float(t)
        if self._cache is None or self._cache.t != t:
            parts = self._build(t)
            u, J = parts["u"], parts["grad_u"]
            f = []
            for i in range(self.dim):
                adv = sum((u[j] * J[i][j] for j in range(self.dim)), SeparableField([], self.dim))
                f.append(parts["dudt"][i] - self.nu * self.laplacian_factor * u[i] + adv + parts["grad_p"][i])
            self._cache = ExactFields(t=t, f=f, **parts)
        return self._cache

    # broadcast evaluation on coordinate tuples

    def u(self, xs, t) -> list:
        return [c.evaluate(xs) for c in self.fields(t).u]

    def grad_u(self, xs, t) -> list:
        return [[c.evaluate(xs) for c in row] for row in self.fields(t).grad_u]

    def dudt(self, xs, t) -> list:
        return [c.evaluate(xs) for c in self.fields(t).dudt]

    def p(self, xs, t):
        return self.fields(t).p.evaluate(xs)

    def grad_p(self, xs, t) -> list:
        return [c.evaluate(xs) for c in self.fields(t).grad_p]

    def f(self, xs, t) -> list:
        return [c.evaluate(xs) for c in self.fields(t).f]

    # point arrays

    @staticmethod
    def _split(x) -> tuple:
        x = np.asarray(x, dtype=float)
        return tuple(x[:, c] for c in range(x.shape[1]))

    def _stack(self, comps, m) -> np.ndarray:
        return np.stack([np.broadcast_to(c, (m,)) for c in comps], axis=1)

    def exact_velocity(self, x, t) -> np.ndarray:
        return self._stack(self.u(self._split(x), t), len(x))

    def exact_pressure(self, x, t) -> np.ndarray:
        return np.broadcast_to(self.p(self._split(x), t), (len(x),)).copy()

    def velocity_gradient(self, x, t) -> np.ndarray:
        J = self.grad_u(self._split(x), t)
        return np.stack([self._stack(row, len(x)) for row in J], axis=1)

    def pressure_gradient(self, x, t) -> np.ndarray:
        return self._stack(self.grad_p(self._split(x), t), len(x))

    def forcing(self, x, t) -> np.ndarray:
        return self._stack(self.f(self._split(x), t), len(x))


class TrigonometricCase3D(ManufacturedCase):
    """Trigonometric solution on the unit cube, arguments shifted by t.

    The pressure has zero mean over the cube for every t.
    """

    dim = 3
    laplacian_factor = -2.0

    def _build(self, t: float) -> dict:
        sa, ca = sin_factor(0, 3, shift=t), cos_factor(0, 3, shift=t)
        sb, cb = sin_factor(1, 3, shift=t), cos_factor(1, 3, shift=t)
        sc, cc = sin_factor(2, 3, shift=t), cos_factor(2, 3, shift=t)
        u = [sa * (cc - sb), -ca * cb - sb * cc, sc * (cb - ca)]
        J = [
            [ca * (cc - sb), -sa * cb, -sa * sc],
            [sa * cb, ca * sb - cb * cc, sb * sc],
            [sc * sa, -sc * sb, cc * (cb - ca)],
        ]
        # every argument carries +t, so d/dt = d/dx + d/dy + d/dz
        dudt = [row[0] + row[1] + row[2] for row in J]
        # sin and cos of x - y - z + t, expanded into per-axis factors
        sy, cy = sin_factor(1, 3), cos_factor(1, 3)
        sz, cz = sin_factor(2, 3), cos_factor(2, 3)
        cyz = cy * cz - sy * sz
        syz = sy * cz + cy * sz
        s_ph, c_ph = sa * cyz - ca * syz, ca * cyz + sa * syz
        p = s_ph + PRESSURE_SHIFT_3D * np.sin(0.5 - t)
        return dict(u=u, grad_u=J, dudt=dudt, p=p, grad_p=[c_ph, -c_ph, -c_ph])


class StreamFunctionCase2D(ManufacturedCase):
    """u = (d psi/dy, -d psi/dx), psi = sin(pi x) sin(pi y) cos(t); u . n = 0 on the boundary."""

    dim = 2
    laplacian_factor = -2.0 * np.pi**2

    def _build(self, t: float) -> dict:
        pi = np.pi
        sx, cx = sin_factor(0, 2, pi), cos_factor(0, 2, pi)
        sy, cy = sin_factor(1, 2, pi), cos_factor(1, 2, pi)
        a, b = pi * np.cos(t), pi**2 * np.cos(t)
        u = [a * sx * cy, -a * cx * sy]
        J = [[b * cx * cy, -b * sx * sy], [b * sx * sy, -b * cx * cy]]
        s = -pi * np.sin(t)
        dudt = [s * sx * cy, -s * cx * sy]
        # sin and cos of x - y + t
        sa, ca = sin_factor(0, 2, shift=t), cos_factor(0, 2, shift=t)
        sy1, cy1 = sin_factor(1, 2), cos_factor(1, 2)
        s_ph, c_ph = sa * cy1 - ca * sy1, ca * cy1 + sa * sy1
        p = s_ph - PRESSURE_SHIFT_2D * np.sin(t)
        return dict(u=u, grad_u=J, dudt=dudt, p=p, grad_p=[c_ph, -c_ph])


def mms_3d(nu: float = 1e-3) -> ManufacturedCase:
    return TrigonometricCase3D(nu)


def mms_2d(nu: float = 1e-3) -> ManufacturedCase:
    return StreamFunctionCase2D(nu)


def manufactured_case(dim: int, nu: float = 1e-3) -> ManufacturedCase:
    if dim == 3:
        return mms_3d(nu)
    if dim == 2:
        return mms_2d(nu)
    raise ValueError(f"no manufactured case for dim={dim}")
