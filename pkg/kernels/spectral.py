"""
Transforms, Leray projection, inner products and norms on the periodic grid.

Raw helpers work on coefficient arrays of shape (..., n, n) and are what the
solvers call in their inner loops; the field-level functions below them
validate grids and wrap results in SpectralVecField / PhysicalVecField.
"""
from enum import Enum

import numpy as np
import scipy.fft as sfft

from config import CBF_THREADS
from models.field import PhysicalVecField, SpectralVecField
from utils.exceptions import GridMismatchError, InvalidFieldError, ParameterError

# Random fields are drawn on a fixed lattice of integer wavenumbers so that
# a seed gives the same low modes at every resolution.
MASTER_BAND = 128


class Direction(str, Enum):
    TO_PHYSICAL = "to_physical"
    TO_SPECTRAL = "to_spectral"


# ---------------------------------------------------------------------------
# Raw coefficient kernels
# ---------------------------------------------------------------------------

def forward_fft(samples, grid):
    return sfft.fft2(samples, axes=(-2, -1), workers=CBF_THREADS) / grid.n ** 2


def inverse_fft(coeffs, grid):
    return sfft.ifft2(coeffs, axes=(-2, -1), workers=CBF_THREADS).real * grid.n ** 2


def truncate(coeffs, grid):
    """Zero every mode outside the retained band (the mean mode included)."""
    return coeffs * grid.band_mask


def project(coeffs, grid):
    """Mode-wise P(k) = I - k k^T / |k|^2 on (..., 2, n, n); the mean mode is set to zero."""
    kx, ky = grid.kx, grid.ky
    div = (kx * coeffs[..., 0, :, :] + ky * coeffs[..., 1, :, :]) / grid.k2_safe
    out = np.array(coeffs, dtype=complex)
    out[..., 0, :, :] -= kx * div
    out[..., 1, :, :] -= ky * div
    out[..., 0, 0] = 0.0
    return out


def dealias_project(coeffs, grid):
    return project(truncate(coeffs, grid), grid)


def to_band(samples, grid):
    """Physical vector samples -> retained, solenoidal coefficients."""
    return dealias_project(forward_fft(samples, grid), grid)


def gradient_samples(coeffs, grid):
    """Physical samples of the velocity gradient, ``out[i, j] = d_j u_i``."""
    kx, ky = grid.kx, grid.ky
    grads = np.empty((2, 2) + coeffs.shape[1:], dtype=complex)
    grads[:, 0] = 1j * kx * coeffs
    grads[:, 1] = 1j * ky * coeffs
    return inverse_fft(grads, grid)


def inner_coeffs(a, b, grid, weight=None):
    """L^2 * sum_k Re(a(k) . conj(b(k))), optionally weighted mode-wise."""
    prod = (a * np.conj(b)).real
    if weight is not None:
        prod = prod * weight
    return float(grid.length ** 2 * prod.sum())


def quadrature(samples, grid):
    """Uniform-grid (trapezoid on the torus) integral of a scalar sample array."""
    return float(grid.cell_area * np.sum(samples))


# ---------------------------------------------------------------------------
# Field-level operations
# ---------------------------------------------------------------------------

def check_same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid.describe()} vs {f.grid.describe()}")
    return grid


def to_physical(field):
    return PhysicalVecField(field.grid, inverse_fft(field.coeffs, field.grid))


def to_spectral(field):
    return SpectralVecField(field.grid, forward_fft(field.samples, field.grid))


def transform(field, direction, grid=None):
    """Spectral <-> physical transform; ``grid`` optionally pins the expected grid."""
    direction = Direction(direction)
    if grid is not None and field.grid != grid:
        raise GridMismatchError(f"field lives on {field.grid.describe()}, expected {grid.describe()}")
    if direction is Direction.TO_PHYSICAL:
        if not isinstance(field, SpectralVecField):
            raise InvalidFieldError("to_physical expects a SpectralVecField")
        return to_physical(field)
    if not isinstance(field, PhysicalVecField):
        raise InvalidFieldError("to_spectral expects a PhysicalVecField")
    return to_spectral(field)


def leray_project(field):
    return SpectralVecField(field.grid, project(field.coeffs, field.grid))


def dealias(field):
    return SpectralVecField(field.grid, truncate(field.coeffs, field.grid))


def inner_product(u, v, space="H"):
    grid = check_same_grid(u, v)
    if space == "H":
        return inner_coeffs(u.coeffs, v.coeffs, grid)
    if space == "V":
        return inner_coeffs(u.coeffs, v.coeffs, grid, weight=grid.k2)
    if space == "Vprime":
        weight = 1.0 / grid.k2_safe
        weight[0, 0] = 0.0
        return inner_coeffs(u.coeffs, v.coeffs, grid, weight=weight)
    raise ParameterError(f"unsupported inner-product space: {space!r}")


def lebesgue_norm(samples, grid, p):
    """||u||_{L^p} of vector samples by grid quadrature."""
    mag = np.sqrt(samples[0] ** 2 + samples[1] ** 2)
    return quadrature(mag ** p, grid) ** (1.0 / p)


def norm(u, space="H", r=None):
    """Norm of ``u`` in H, V, Vprime, L4 or Lr1 (the L^{r+1} norm, r in {1, 2, 3})."""
    if space in ("H", "V", "Vprime"):
        return float(np.sqrt(max(inner_product(u, u, space), 0.0)))
    if space == "L4":
        return lebesgue_norm(inverse_fft(u.coeffs, u.grid), u.grid, 4)
    if space == "Lr1":
        if r not in (1, 2, 3):
            raise ParameterError(f"absorption exponent must be 1, 2 or 3, got {r}")
        return lebesgue_norm(inverse_fft(u.coeffs, u.grid), u.grid, r + 1)
    raise ParameterError(f"unsupported norm space: {space!r}")


def vorticity(u):
    """Scalar vorticity d_x u_2 - d_y u_1 sampled on the grid."""
    grid = u.grid
    return inverse_fft(1j * grid.kx * u.coeffs[1] - 1j * grid.ky * u.coeffs[0], grid)


def random_divfree_field(grid, seed, decay_exponent=2.0, norm_h=1.0):
    """
    Deterministic random admissible field.

    ``decay_exponent`` s sets the coefficient amplitude |u(k)| ~ |k|^-(s + 1),
    so the shell energy spectrum falls like |k|^-(2s + 1) and ||u||_V stays
    bounded under grid refinement for every s >= 0. It is not the exponent of
    the energy spectrum itself. The draws are keyed by integer wavenumber, so
    two grids that share a mode share its random coefficient. The result is
    rescaled to ||u||_H = norm_h.
    """
    if decay_exponent < 0:
        raise ParameterError(f"decay exponent must be non-negative, got {decay_exponent}")
    if grid.band_limit > MASTER_BAND:
        raise ParameterError(f"grid band {grid.band_limit} exceeds the random-field lattice {MASTER_BAND}")
    rng = np.random.default_rng(seed)
    size = 2 * MASTER_BAND + 1
    draws = rng.standard_normal((2, 2, size, size))
    lattice = draws[0] + 1j * draws[1]

    kint = grid.integer_wavenumbers
    keep = np.flatnonzero(np.abs(kint) <= grid.band_limit)
    idx = kint[keep] + MASTER_BAND
    coeffs = np.zeros((2, grid.n, grid.n), dtype=complex)
    coeffs[np.ix_([0, 1], keep, keep)] = lattice[np.ix_([0, 1], idx, idx)]

    flipped = np.roll(coeffs[:, ::-1, ::-1], 1, axis=(1, 2))
    coeffs = 0.5 * (coeffs + np.conj(flipped))
    amplitude = (grid.k2_safe / grid.lambda1) ** (-(decay_exponent + 1.0) / 2.0)
    coeffs = dealias_project(coeffs * amplitude, grid)

    current = np.sqrt(inner_coeffs(coeffs, coeffs, grid))
    if current > 0 and norm_h is not None:
        coeffs = coeffs * (norm_h / current)
    return SpectralVecField(grid, coeffs)


def shear_mode(grid, amplitude=1.0):
    """The single-mode shear flow (amplitude * sin(2 pi y / L), 0)."""
    _, y = grid.coordinates
    samples = np.stack([amplitude * np.sin(2 * np.pi * y / grid.length), np.zeros_like(y)])
    return SpectralVecField(grid, dealias_project(forward_fft(samples, grid), grid))


def gaussian_unit_field(grid, rng):
    """White Gaussian admissible field with ||u||_H = 1, drawn from ``rng``."""
    draws = rng.standard_normal((2, 2, grid.n, grid.n))
    coeffs = draws[0] + 1j * draws[1]
    flipped = np.roll(coeffs[:, ::-1, ::-1], 1, axis=(1, 2))
    coeffs = dealias_project(0.5 * (coeffs + np.conj(flipped)), grid)
    return SpectralVecField(grid, coeffs / np.sqrt(inner_coeffs(coeffs, coeffs, grid)))
