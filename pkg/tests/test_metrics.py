import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipcs.fem import nodal_interpolate
from ipcs.grid import build_grid
from ipcs.metrics import (
    ErrorReport,
    composite_norm,
    convergence_rate,
    integral,
    pressure_error,
    spatial_error,
    step_errors,
)
from ipcs.mms import mms_2d, mms_3d
from ipcs.separable import SeparableField

import oracles


@pytest.mark.parametrize("make, n", [(mms_3d, 4), (mms_2d, 8)])
def test_interpolation_error_order_two(make, n):
    case = make()
    errs = []
    for m in (n, 2 * n):
        g = build_grid(m, case.dim)
        u = nodal_interpolate(case.exact_velocity, g, 0.3)
        errs.append(spatial_error(u, case.fields(0.3).u, g, 0.3))
    assert 3.6 <= errs[0] / errs[1] <= 4.4


def test_constant_field_has_zero_error():
    g = build_grid(4, 3)
    c = SeparableField.constant(2.5, 3)
    assert spatial_error(np.full(g.n_nodes, 2.5), c, g, 0.0) < 1e-15
    assert spatial_error(np.full(g.n_nodes, 2.5), lambda xs, t: 2.5 + 0 * xs[0], g, 0.0) < 1e-15


def test_linear_function_against_zero():
    g = build_grid(5, 2)
    x = SeparableField.factor(0, lambda s: s, 2)
    assert abs(spatial_error(np.zeros(g.n_nodes), x, g, 0.0) - 1 / math.sqrt(3)) < 1e-12


@pytest.mark.parametrize("make, n", [(mms_3d, 3), (mms_2d, 5)])
def test_errors_match_cell_loop_oracle(make, n, rng):
    case = make()
    g = build_grid(n, case.dim)
    t = 0.4
    u = nodal_interpolate(case.exact_velocity, g, t) + 0.01 * rng.standard_normal((case.dim, g.n_nodes))
    ex = case.fields(t)
    ref_l2 = oracles.l2_error(g, u, case.exact_velocity, t)
    ref_h1 = oracles.h1_error(g, u, case.velocity_gradient, t)
    for exact in (ex.u, case.u):
        assert abs(spatial_error(u, exact, g, t) - ref_l2) < 1e-9 * ref_l2
    for exact in (ex.grad_u, case.grad_u):
        assert abs(spatial_error(u, exact, g, t, "H1") - ref_h1) < 1e-9 * ref_h1
    assert spatial_error(u, ex.u, g, t) > 0


def test_pressure_error_ignores_constants(rng):
    case = mms_3d()
    g = build_grid(4, 3)
    t = 0.25
    p = nodal_interpolate(case.exact_pressure, g, t)
    base = pressure_error(p, case.fields(t).p, g, t)
    shifted = pressure_error(p + 7.0, case.fields(t).p + 3.0, g, t)
    assert abs(base - shifted) < 1e-9 * base
    slow = pressure_error(p, case.p, g, t)
    assert abs(base - slow) < 1e-9 * base
    # oracle: L2 distance after removing both means
    mean_h = integral(p, g)
    mean_ex = integral(None, g, exact=case.p, t=t)
    ref = oracles.l2_error(g, p - mean_h, lambda x, s: case.exact_pressure(x, s) - mean_ex, t)
    assert abs(base - ref) < 1e-9 * ref


def test_unknown_norm():
    with pytest.raises(ValueError):
        spatial_error(np.zeros(9), SeparableField.constant(0, 2), build_grid(2, 2), 0.0, "H2")


def test_composite_norm_examples():
    assert math.isclose(composite_norm([2.0], 0.5), 2 * math.sqrt(0.5))
    assert composite_norm([1, 3, 2], 0.1, "Linf") == 3
    M, k, e = 128, 1 / 128, 0.3
    assert math.isclose(composite_norm([e] * M, k), e * math.sqrt(M * k))
    assert math.isclose(composite_norm([1e200, 1e200], 1.0), math.sqrt(2) * 1e200)
    with pytest.raises(ValueError):
        composite_norm([], 0.1)
    with pytest.raises(ValueError):
        composite_norm([1.0], 0.1, "L1")


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30), st.floats(1e-3, 1e3), st.floats(1e-4, 1))
def test_composite_norm_homogeneous(values, c, k):
    for mode in ("L2", "Linf"):
        scaled = composite_norm([c * v for v in values], k, mode)
        assert math.isclose(scaled, c * composite_norm(values, k, mode), rel_tol=1e-12, abs_tol=1e-300)


def test_convergence_rate_examples():
    assert math.isclose(convergence_rate(4e-4, 1e-4), 2.0)
    assert abs(convergence_rate(2.03e-3, 1.04e-3) - 0.965) < 1e-3
    assert abs(convergence_rate(1.37e-4, 3.38e-5) - 2.02) < 1e-2
    with pytest.raises(ValueError):
        convergence_rate(0.0, 1.0)


def test_error_report_composites():
    rep = ErrorReport(k=0.5)
    rep.append(0.5, 1.0, 2.0, 3.0, 4.0)
    rep.append(1.0, 3.0, 2.0, 1.0, 0.0)
    comp = rep.composites()
    assert math.isclose(comp["err_l2l2_pred"], math.sqrt(0.5 * 10))
    assert math.isclose(comp["err_l2h1_pred"], math.sqrt(0.5 * 8))
    assert comp["err_linfl2_pred"] == 3.0
    assert math.isclose(comp["err_l2l2_end"], math.sqrt(5))
    assert math.isclose(comp["err_l2l2_pres"], math.sqrt(8))


def test_step_errors_of_exact_interpolant_are_small():
    case = mms_3d()
    g = build_grid(8, 3)
    u = nodal_interpolate(case.exact_velocity, g, 0.5)
    p = nodal_interpolate(case.exact_pressure, g, 0.5)
    errs = step_errors(case, g, u, u, p, 0.5)
    assert errs[0] == errs[2]
    assert max(errs[0], errs[3]) < 5e-3 and errs[1] < 0.2
