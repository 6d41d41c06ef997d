"""
Dealiased nonlinear operators of the damped Navier-Stokes model and their derivatives.

Every nonlinear term is evaluated pointwise on the grid, transformed, truncated
to the retained band and Leray-projected. Since inputs are band-limited and
the band satisfies 3K < n, pairing any of these results with a band-limited
solenoidal field equals the grid quadrature of the pointwise integrand.
"""
from enum import Enum

import numpy as np

from kernels.spectral import (
    check_same_grid,
    gradient_samples,
    inner_coeffs,
    inverse_fft,
    lebesgue_norm,
    quadrature,
    to_band,
)
from models.field import SpectralVecField
from utils.exceptions import MonotonicityPreconditionError, ParameterError
from utils.logger import get_logger

logger = get_logger(__name__)

# |u| below this fraction of max|u| is treated as zero in the r = 2 derivative
R2_ZERO_GUARD = 1e-12


class MonotonicityMode(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"
    ABSORPTION = "absorption"


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def _magnitude(u):
    return np.sqrt(u[0] ** 2 + u[1] ** 2)


def _advect(u, grad_v):
    """Pointwise (u . grad) v given samples of u and of grad v."""
    return np.stack([u[0] * grad_v[i, 0] + u[1] * grad_v[i, 1] for i in range(2)])


def _check_exponent(r):
    if r not in (1, 2, 3):
        raise ParameterError(f"absorption exponent must be 1, 2 or 3, got {r}")


def absorption_pointwise(u, r):
    if r == 1:
        return u.copy()
    mag = _magnitude(u)
    return mag ** (r - 1) * u


def absorption_derivative_pointwise(u, v, r):
    """Pointwise C'(u) v."""
    if r == 1:
        return v.copy()
    mag = _magnitude(u)
    if r == 3:
        return mag ** 2 * v + 2.0 * _dot(u, v) * u
    guard = R2_ZERO_GUARD * mag.max()
    safe = np.where(mag > guard, mag, 1.0)
    radial = np.where(mag > guard, _dot(u, v) / safe, 0.0)
    return mag * v + radial * u


def absorption_second_derivative_pointwise(u, v, w):
    """Pointwise C''(u)(v, w) for r = 3."""
    return 2.0 * (_dot(u, w) * v + _dot(u, v) * w + _dot(w, v) * u)


# ---------------------------------------------------------------------------
# Coefficient-level operators
# ---------------------------------------------------------------------------

def convection_coeffs(u_hat, v_hat, grid):
    return to_band(_advect(inverse_fft(u_hat, grid), gradient_samples(v_hat, grid)), grid)


def absorption_coeffs(u_hat, r, grid):
    return to_band(absorption_pointwise(inverse_fft(u_hat, grid), r), grid)


class Linearization:
    """
    Derivatives of the nonlinearity N(u) = B(u, u) + beta C(u) frozen at one state.

    The physical samples of u and grad u are computed once, so repeated
    tangent or adjoint applications cost two transforms each.
    """

    def __init__(self, u_hat, params, grid):
        self.grid = grid
        self.params = params
        self.u_hat = u_hat
        self.u = inverse_fft(u_hat, grid)
        self.grad_u = gradient_samples(u_hat, grid)

    def nonlinearity(self):
        """B(u, u) + beta C(u)."""
        total = _advect(self.u, self.grad_u)
        if self.params.beta:
            total = total + self.params.beta * absorption_pointwise(self.u, self.params.r)
        return to_band(total, self.grid)

    def tangent(self, w_hat):
        """B'(u) w + beta C'(u) w."""
        w = inverse_fft(w_hat, self.grid)
        grad_w = gradient_samples(w_hat, self.grid)
        total = _advect(self.u, grad_w) + _advect(w, self.grad_u)
        if self.params.beta:
            total = total + self.params.beta * absorption_derivative_pointwise(self.u, w, self.params.r)
        return to_band(total, self.grid)

    def adjoint(self, p_hat):
        """B'(u)* p + beta C'(u) p; C'(u) is pointwise symmetric."""
        p = inverse_fft(p_hat, self.grid)
        grad_p = gradient_samples(p_hat, self.grid)
        # (grad u)^T p: component i is sum_j d_i u_j p_j
        transpose = np.stack([self.grad_u[0, i] * p[0] + self.grad_u[1, i] * p[1] for i in range(2)])
        total = transpose - _advect(self.u, grad_p)
        if self.params.beta:
            total = total + self.params.beta * absorption_derivative_pointwise(self.u, p, self.params.r)
        return to_band(total, self.grid)


# ---------------------------------------------------------------------------
# Field-level operators
# ---------------------------------------------------------------------------

def stokes_A(u):
    """A u = -P Laplacian u, i.e. |k|^2 u(k)."""
    return SpectralVecField(u.grid, u.grid.k2 * u.coeffs)


def convection_B(u, v):
    grid = check_same_grid(u, v)
    return SpectralVecField(grid, convection_coeffs(u.coeffs, v.coeffs, grid))


def trilinear_b(u, v, w):
    """b(u, v, w) = integral of ((u . grad) v) . w, by grid quadrature."""
    grid = check_same_grid(u, v, w)
    integrand = _dot(_advect(inverse_fft(u.coeffs, grid), gradient_samples(v.coeffs, grid)), inverse_fft(w.coeffs, grid))
    return quadrature(integrand, grid)


def absorption_C(u, r):
    _check_exponent(r)
    return SpectralVecField(u.grid, absorption_coeffs(u.coeffs, r, u.grid))


def C_prime(u, v, r):
    _check_exponent(r)
    grid = check_same_grid(u, v)
    pointwise = absorption_derivative_pointwise(inverse_fft(u.coeffs, grid), inverse_fft(v.coeffs, grid), r)
    return SpectralVecField(grid, to_band(pointwise, grid))


def C_double_prime(u, v, w, r=3):
    if r != 3:
        raise ParameterError("the second derivative of C is only provided for r = 3")
    grid = check_same_grid(u, v, w)
    pointwise = absorption_second_derivative_pointwise(
        inverse_fft(u.coeffs, grid), inverse_fft(v.coeffs, grid), inverse_fft(w.coeffs, grid)
    )
    return SpectralVecField(grid, to_band(pointwise, grid))


def B_prime(u, w):
    """B'(u) w = B(u, w) + B(w, u)."""
    grid = check_same_grid(u, w)
    return SpectralVecField(grid, convection_coeffs(u.coeffs, w.coeffs, grid) + convection_coeffs(w.coeffs, u.coeffs, grid))


def B_prime_adjoint(u, p):
    """B'(u)* p = P[-(u . grad) p + (grad u)^T p]."""
    grid = check_same_grid(u, p)
    u_s = inverse_fft(u.coeffs, grid)
    grad_u = gradient_samples(u.coeffs, grid)
    p_s = inverse_fft(p.coeffs, grid)
    transpose = np.stack([grad_u[0, i] * p_s[0] + grad_u[1, i] * p_s[1] for i in range(2)])
    return SpectralVecField(grid, to_band(transpose - _advect(u_s, gradient_samples(p.coeffs, grid)), grid))


def G_apply(u, params):
    """G(u) = mu A u + B(u, u) + alpha u + beta C(u)."""
    grid = u.grid
    lin = Linearization(u.coeffs, params, grid)
    coeffs = (params.mu * grid.k2 + params.alpha) * u.coeffs + lin.nonlinearity()
    return SpectralVecField(grid, coeffs)


# ---------------------------------------------------------------------------
# Inequality margins (non-negative when the inequality holds)
# ---------------------------------------------------------------------------

def _absorption_pairing(u, v, r, grid):
    """<C(u) - C(v), u - v> by quadrature of the pointwise integrand."""
    us, vs = inverse_fft(u.coeffs, grid), inverse_fft(v.coeffs, grid)
    diff = absorption_pointwise(us, r) - absorption_pointwise(vs, r)
    return quadrature(_dot(diff, us - vs), grid), us, vs


def absorption_monotonicity_margin(u, v, r):
    """
    <C(u) - C(v), u - v> - (1/2) || |u|^{(r-1)/2} (u - v) ||^2 - (1/2) || |v|^{(r-1)/2} (u - v) ||^2.
    """
    _check_exponent(r)
    grid = check_same_grid(u, v)
    pairing, us, vs = _absorption_pairing(u, v, r, grid)
    diff2 = _dot(us - vs, us - vs)
    weighted = quadrature((_magnitude(us) ** (r - 1) + _magnitude(vs) ** (r - 1)) * diff2, grid)
    return pairing - 0.5 * weighted


def absorption_difference_bound_margin(u, v, r):
    """
    Slack of ||u - v||_{L^{r+1}}^{r+1} <= c_r (|| |u|^{(r-1)/2} (u - v) ||^2 + || |v|^{(r-1)/2} (u - v) ||^2),
    with c_r = 2^{r-2} for r = 3 and 1 for r = 1, 2.
    """
    _check_exponent(r)
    grid = check_same_grid(u, v)
    us, vs = inverse_fft(u.coeffs, grid), inverse_fft(v.coeffs, grid)
    diff2 = _dot(us - vs, us - vs)
    c_r = 2.0 ** (r - 2) if r == 3 else 1.0
    weighted = quadrature((_magnitude(us) ** (r - 1) + _magnitude(vs) ** (r - 1)) * diff2, grid)
    return c_r * weighted - lebesgue_norm(us - vs, grid, r + 1) ** (r + 1)


def c_prime_positivity_margin(u, v, r):
    """<C'(u) v, v> - || |u|^{(r-1)/2} v ||^2 (vanishes for r = 1)."""
    _check_exponent(r)
    grid = check_same_grid(u, v)
    us, vs = inverse_fft(u.coeffs, grid), inverse_fft(v.coeffs, grid)
    pairing = quadrature(_dot(absorption_derivative_pointwise(us, vs, r), vs), grid)
    return pairing - quadrature(_magnitude(us) ** (r - 1) * _dot(vs, vs), grid)


def trilinear_bound_margin(u, v, w):
    """||u||_{L^4} ||v||_V ||w||_{L^4} - |b(u, v, w)|."""
    grid = check_same_grid(u, v, w)
    bound = (
        lebesgue_norm(inverse_fft(u.coeffs, grid), grid, 4)
        * np.sqrt(inner_coeffs(v.coeffs, v.coeffs, grid, weight=grid.k2))
        * lebesgue_norm(inverse_fft(w.coeffs, grid), grid, 4)
    )
    return bound - abs(trilinear_b(u, v, w))


def monotonicity_check(u, v, params, mode, radius=None):
    """
    Margin of the monotonicity inequality for G; non-negative means it holds.

    Args:
        u, v: fields on the same grid
        params: CbfParams
        mode: ``local`` (needs ||v||_{L^4} <= radius), ``global`` (needs r = 3 and
            2 beta mu >= 1) or ``absorption`` (the C-only inequality)
        radius: L^4 ball radius for the local mode; defaults to ||v||_{L^4}

    Returns:
        The margin as a float
    """
    mode = MonotonicityMode(mode)
    grid = check_same_grid(u, v)
    if mode is MonotonicityMode.ABSORPTION:
        return absorption_monotonicity_margin(u, v, params.r)

    w = u - v
    pairing = inner_coeffs(G_apply(u, params).coeffs - G_apply(v, params).coeffs, w.coeffs, grid)
    if mode is MonotonicityMode.GLOBAL:
        if not params.critical_monotone:
            raise MonotonicityPreconditionError(
                f"global monotonicity needs r = 3 and 2*beta*mu >= 1 (r={params.r}, 2*beta*mu={2 * params.beta * params.mu:.3g})"
            )
        return pairing

    v_l4 = lebesgue_norm(inverse_fft(v.coeffs, grid), grid, 4)
    if radius is None:
        radius = v_l4
    if v_l4 > radius * (1 + 1e-12):
        raise MonotonicityPreconditionError(f"||v||_L4 = {v_l4:.6g} exceeds the ball radius {radius:.6g}")
    shift = 27.0 / (32.0 * params.mu ** 3) * radius ** 4
    return pairing + shift * inner_coeffs(w.coeffs, w.coeffs, grid)
