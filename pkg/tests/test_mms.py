import numpy as np
import pytest

from ipcs.mms import PRESSURE_SHIFT_2D, PRESSURE_SHIFT_3D, manufactured_case, mms_2d, mms_3d
from ipcs.fem import TensorQuadrature
from ipcs.grid import build_grid


def _fd(case, x, t, eps):
    """Central finite-difference pieces of the momentum equation at one point."""
    d = case.dim
    U = lambda y, s: case.exact_velocity(y[None], s)[0]
    P = lambda y, s: case.exact_pressure(y[None], s)[0]
    dudt = (U(x, t + eps) - U(x, t - eps)) / (2 * eps)
    J, lap, gp = np.zeros((d, d)), np.zeros(d), np.zeros(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        J[:, j] = (U(x + e, t) - U(x - e, t)) / (2 * eps)
        lap += (U(x + e, t) - 2 * U(x, t) + U(x - e, t)) / eps**2
        gp[j] = (P(x + e, t) - P(x - e, t)) / (2 * eps)
    return U(x, t), dudt, J, lap, gp


@pytest.mark.parametrize("make", [mms_3d, mms_2d])
def test_forcing_finite_difference_residual(make, rng):
    case = make(1e-3)
    for _ in range(100):
        x, t = rng.random(case.dim), rng.random()
        u, dudt, J, lap, gp = _fd(case, x, t, 1e-4)
        res = dudt - case.nu * lap + J @ u + gp - case.forcing(x[None], t)[0]
        assert np.abs(res).max() <= 1e-6


@pytest.mark.parametrize("make", [mms_3d, mms_2d])
def test_divergence_free(make, rng):
    case = make()
    for _ in range(100):
        x, t = rng.random(case.dim), rng.random()
        _, _, J, _, _ = _fd(case, x, t, 1e-5)
        assert abs(np.trace(J)) <= 1e-8


@pytest.mark.parametrize("make", [mms_3d, mms_2d])
def test_closed_forms_match_finite_differences(make, rng):
    case = make()
    x, t = rng.random((1, case.dim)), 0.37
    u, dudt, J, lap, gp = _fd(case, x[0], t, 1e-5)
    assert np.allclose(case.velocity_gradient(x, t)[0], J, atol=1e-8)
    assert np.allclose(case.pressure_gradient(x, t)[0], gp, atol=1e-8)
    assert np.allclose(case.laplacian_factor * u, lap, atol=1e-3)


def test_linearity_in_viscosity(rng):
    a, b = mms_3d(1e-3), mms_3d(0.5)
    x, t = rng.random((5, 3)), 0.2
    lap = a.laplacian_factor * a.exact_velocity(x, t)
    assert np.allclose(a.forcing(x, t) - b.forcing(x, t), -(1e-3 - 0.5) * lap, atol=1e-13)


def test_point_values():
    c3 = mms_3d()
    assert np.allclose(c3.exact_velocity(np.zeros((1, 3)), 0.0), [[0.0, -1.0, 0.0]])
    assert abs(c3.exact_pressure(np.full((1, 3), 0.5), 0.5)[0]) < 1e-15
    # all fields move with x + t: f(x, t) = f(x - tau, t + tau) along the diagonal
    x = np.array([[0.6, 0.7, 0.8]])
    assert np.allclose(c3.exact_velocity(x, 0.1), c3.exact_velocity(x - 0.1, 0.2))


def test_2d_normal_velocity_vanishes_on_boundary(rng):
    c2 = mms_2d()
    s = rng.random(20)
    for axis in (0, 1):
        for side in (0.0, 1.0):
            pts = np.c_[s, s]
            pts[:, axis] = side
            assert np.abs(c2.exact_velocity(pts, 0.3)[:, axis]).max() < 1e-14


@pytest.mark.parametrize("make, shift", [(mms_3d, PRESSURE_SHIFT_3D), (mms_2d, PRESSURE_SHIFT_2D)])
def test_pressure_mean_zero(make, shift):
    case = make()
    quad = TensorQuadrature(build_grid(16, case.dim), 4)
    for t in (0.0, 0.3, 1.0):
        assert abs(quad.integral(case.fields(t).p)) < 1e-12
    assert shift > 0


def test_factory():
    assert manufactured_case(3).dim == 3 and manufactured_case(2).dim == 2
    with pytest.raises(ValueError):
        manufactured_case(1)
