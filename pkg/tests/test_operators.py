import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernels import operators as ops
from kernels import spectral as sp
from models.grid import GridSpec
from models.params import CbfParams
from utils.exceptions import MonotonicityPreconditionError, ParameterError
from utils.helpers import loglog_slope


def _scale(u, v, w):
    return sp.norm(u, "L4") * sp.norm(v, "V") * sp.norm(w, "L4")


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_trilinear_form_is_skew(seed):
    grid = GridSpec(n=16)
    u, v, w = (sp.random_divfree_field(grid, seed + k) for k in range(3))
    assert abs(ops.trilinear_b(u, v, v)) <= 1e-11 * _scale(u, v, v)
    assert abs(ops.trilinear_b(u, v, w) + ops.trilinear_b(u, w, v)) <= 1e-11 * _scale(u, v, w)
    assert ops.trilinear_bound_margin(u, v, w) >= 0


def test_convection_pairing_matches_trilinear_form(grid, make_field):
    u, v, w = make_field(grid, 0), make_field(grid, 1), make_field(grid, 2)
    assert sp.inner_product(ops.convection_B(u, v), w) == pytest.approx(ops.trilinear_b(u, v, w), rel=1e-11)


def test_b_prime_adjoint_duality(grid, make_field):
    u, q, p = make_field(grid, 3), make_field(grid, 4), make_field(grid, 5)
    lhs = sp.inner_product(ops.B_prime(u, q), p)
    rhs = sp.inner_product(q, ops.B_prime_adjoint(u, p))
    assert lhs == pytest.approx(rhs, rel=1e-11)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_absorption_energy_and_inequalities(r, make_field):
    grid = GridSpec.for_exponent(16, r)
    u, v = make_field(grid, 6, norm=2.0), make_field(grid, 7)
    energy = sp.inner_product(ops.absorption_C(u, r), u)
    assert energy == pytest.approx(sp.norm(u, "Lr1", r) ** (r + 1), rel=1e-10)
    assert ops.c_prime_positivity_margin(u, v, r) >= -1e-12
    assert ops.absorption_monotonicity_margin(u, v, r) >= -1e-10
    assert ops.absorption_difference_bound_margin(u, v, r) >= -1e-10


def test_linear_absorption_has_no_positivity_slack(grid, make_field):
    u, v = make_field(grid, 0), make_field(grid, 1)
    assert ops.c_prime_positivity_margin(u, v, 1) == pytest.approx(0.0, abs=1e-12)


def test_cubic_taylor_identity(cubic_grid, make_field):
    u, v = make_field(cubic_grid, 8), make_field(cubic_grid, 9)
    expansion = ops.absorption_C(u, 3) + ops.C_prime(u, v, 3) + 0.5 * ops.C_double_prime(u, v, v) + ops.absorption_C(v, 3)
    exact = ops.absorption_C(u + v, 3)
    assert sp.norm(exact - expansion) <= 1e-11 * sp.norm(exact)


def test_second_derivative_is_symmetric(cubic_grid, make_field):
    u, v, w = make_field(cubic_grid, 18), make_field(cubic_grid, 19), make_field(cubic_grid, 20)
    vw = ops.C_double_prime(u, v, w).coeffs
    wv = ops.C_double_prime(u, w, v).coeffs
    assert np.max(np.abs(vw - wv)) <= 1e-13 * np.max(np.abs(vw))


FD_TAUS = (1e-2, 1e-3, 1e-4, 1e-5)


def _difference_quotient_slope(apply, derivative, u, v):
    exact = derivative(u, v)
    errors = [sp.norm((apply(u + tau * v) - apply(u)) * (1.0 / tau) - exact) for tau in FD_TAUS]
    return loglog_slope(FD_TAUS, errors)


@pytest.mark.parametrize("r", [2, 3])
def test_absorption_derivative_difference_quotients(r, make_field):
    grid = GridSpec.for_exponent(16, r)
    u, v = make_field(grid, 21), make_field(grid, 22)
    slope = _difference_quotient_slope(lambda x: ops.absorption_C(x, r), lambda x, y: ops.C_prime(x, y, r), u, v)
    assert slope >= 0.9


def test_convection_derivative_difference_quotients(grid, make_field):
    u, v = make_field(grid, 23), make_field(grid, 24)
    slope = _difference_quotient_slope(lambda x: ops.convection_B(x, x), ops.B_prime, u, v)
    assert slope >= 0.9


def test_second_derivative_only_for_cubic(grid, make_field):
    u = make_field(grid, 0)
    with pytest.raises(ParameterError):
        ops.C_double_prime(u, u, u, r=2)
    with pytest.raises(ParameterError):
        ops.absorption_C(u, 4)


def test_r2_derivative_is_finite_at_zero(grid, make_field):
    zero = sp.SpectralVecField.zeros(grid)
    v = make_field(grid, 1)
    assert np.all(np.isfinite(ops.C_prime(zero, v, 2).coeffs))


def test_linearization_matches_field_operators(cubic_grid, params, make_field):
    u, w, p = make_field(cubic_grid, 10), make_field(cubic_grid, 11), make_field(cubic_grid, 12)
    lin = ops.Linearization(u.coeffs, params, cubic_grid)
    expected = ops.B_prime(u, w) + params.beta * ops.C_prime(u, w, params.r)
    assert np.allclose(lin.tangent(w.coeffs), expected.coeffs, rtol=0, atol=1e-13)
    lhs = sp.inner_coeffs(lin.tangent(w.coeffs), p.coeffs, cubic_grid)
    rhs = sp.inner_coeffs(w.coeffs, lin.adjoint(p.coeffs), cubic_grid)
    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_g_energy_identity(cubic_grid, params, make_field):
    u = make_field(cubic_grid, 13)
    expected = (params.mu * sp.norm(u, "V") ** 2 + params.alpha * sp.norm(u) ** 2
                + params.beta * sp.norm(u, "Lr1", 3) ** 4)
    assert sp.inner_product(ops.G_apply(u, params), u) == pytest.approx(expected, rel=1e-10)


def test_local_monotonicity(grid, make_field):
    params = CbfParams(mu=0.1, alpha=0.0, beta=0.5, r=2)
    u, v = make_field(grid, 14, norm=3.0), make_field(grid, 15, norm=3.0)
    assert ops.monotonicity_check(u, v, params, "local") >= 0
    radius = sp.norm(v, "L4")
    with pytest.raises(MonotonicityPreconditionError):
        ops.monotonicity_check(u, v, params, "local", radius=0.5 * radius)


def test_global_monotonicity_in_critical_regime(cubic_grid, make_field):
    critical = CbfParams(mu=1.0, alpha=0.0, beta=0.5, r=3)
    assert critical.critical_monotone
    u, v = make_field(cubic_grid, 16, norm=5.0), make_field(cubic_grid, 17, norm=5.0)
    assert ops.monotonicity_check(u, v, critical, "global") >= -1e-10 * (1 + sp.norm(u - v, "V") ** 2)


def test_global_monotonicity_precondition(cubic_grid, params, make_field):
    u, v = make_field(cubic_grid, 0), make_field(cubic_grid, 1)
    with pytest.raises(MonotonicityPreconditionError):
        ops.monotonicity_check(u, v, params, "global")


def test_params_validation():
    with pytest.raises(ParameterError):
        CbfParams(mu=0.0)
    with pytest.raises(ParameterError):
        CbfParams(mu=1.0, beta=-1.0)
    with pytest.raises(ParameterError):
        CbfParams(mu=1.0, r=4)
