from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from kernels.spectral import dealias_project, forward_fft, inner_coeffs, inverse_fft
from models.field import FieldSeries, SpectralVecField
from models.grid import GridSpec
from utils.exceptions import AlignmentError, GridMismatchError, ParameterError


class ControlKind(str, Enum):
    IDENTITY = "identity"
    SPECTRAL_MASK = "spectral_mask"
    REGION = "region"


@dataclass(frozen=True, eq=False)
class ControlOperatorD:
    """
    Bounded linear map from controls to forcing, self-adjoint on H.

    ``identity`` acts everywhere, ``spectral_mask`` scales each retained mode
    by a real weight in [0, 1] (even in k), and ``region`` multiplies by an
    indicator chi(x) in physical space before projecting back onto the band.
    """
    grid: GridSpec
    kind: ControlKind = ControlKind.IDENTITY
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ControlKind(self.kind))
        if self.kind is ControlKind.IDENTITY:
            return
        weights = np.array(self.weights, dtype=float)
        if weights.shape != (self.grid.n, self.grid.n):
            raise GridMismatchError(f"control weights must have shape ({self.grid.n}, {self.grid.n}), got {weights.shape}")
        if not np.all(np.isfinite(weights)) or weights.min() < 0 or weights.max() > 1:
            raise ParameterError("control weights must lie in [0, 1]")
        if self.kind is ControlKind.SPECTRAL_MASK:
            flipped = np.roll(weights[::-1, ::-1], 1, axis=(0, 1))
            if np.max(np.abs(flipped - weights)) > 0:
                raise ParameterError("spectral mask must be even in k")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def identity(cls, grid):
        return cls(grid)

    @classmethod
    def spectral_mask(cls, grid, weights):
        return cls(grid, ControlKind.SPECTRAL_MASK, weights)

    @classmethod
    def low_pass(cls, grid, radius):
        """Mask keeping integer wavenumbers with |k| <= radius."""
        k = grid.integer_wavenumbers
        weights = ((k[:, None] ** 2 + k[None, :] ** 2) <= radius ** 2).astype(float)
        return cls.spectral_mask(grid, weights)

    @classmethod
    def region(cls, grid, indicator):
        return cls(grid, ControlKind.REGION, indicator)

    @classmethod
    def box(cls, grid, x_range, y_range):
        """Indicator of the rectangle x_range x y_range (torus coordinates)."""
        x, y = grid.coordinates
        chi = ((x >= x_range[0]) & (x < x_range[1]) & (y >= y_range[0]) & (y < y_range[1])).astype(float)
        return cls.region(grid, chi)

    @property
    def operator_norm_bound(self):
        if self.kind is ControlKind.IDENTITY:
            return 1.0
        return float(self.weights.max())

    def apply_coeffs(self, coeffs):
        """D applied to one coefficient array (2, n, n) or a stack (..., 2, n, n)."""
        if self.kind is ControlKind.IDENTITY:
            return coeffs
        if self.kind is ControlKind.SPECTRAL_MASK:
            return coeffs * self.weights
        return dealias_project(forward_fft(self.weights * inverse_fft(coeffs, self.grid), self.grid), self.grid)

    # D is self-adjoint on band-limited solenoidal fields
    adjoint_coeffs = apply_coeffs

    def apply(self, u):
        return SpectralVecField(u.grid, self.apply_coeffs(u.coeffs))

    def adjoint(self, u):
        return SpectralVecField(u.grid, self.adjoint_coeffs(u.coeffs))

    def adjoint_residual(self, u, v):
        """|<D u, v> - <u, D* v>| for a pair of fields."""
        lhs = inner_coeffs(self.apply_coeffs(u.coeffs), v.coeffs, self.grid)
        rhs = inner_coeffs(u.coeffs, self.adjoint_coeffs(v.coeffs), self.grid)
        return abs(lhs - rhs)


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """Body force f: either one constant field or a series on the time nodes."""
    value: Union[SpectralVecField, FieldSeries, None] = None

    @classmethod
    def zero(cls):
        return cls(None)

    def series(self, grid, n_steps, dt):
        """Nodal coefficients (N+1, 2, n, n), projected onto the retained band."""
        if self.value is None:
            return np.zeros((n_steps + 1, 2, grid.n, grid.n), dtype=complex)
        if self.value.grid != grid:
            raise GridMismatchError("forcing lives on a different grid than the state")
        if isinstance(self.value, SpectralVecField):
            coeffs = np.broadcast_to(self.value.coeffs, (n_steps + 1, 2, grid.n, grid.n))
        else:
            if self.value.n_steps != n_steps or abs(self.value.dt - dt) > 1e-12 * dt:
                raise AlignmentError(
                    f"forcing has {self.value.n_steps} steps of {self.value.dt}, solver expects {n_steps} of {dt}"
                )
            coeffs = self.value.coeffs
        return dealias_project(np.array(coeffs), grid)
