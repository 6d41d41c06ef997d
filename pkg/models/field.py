from dataclasses import dataclass

import numpy as np

from models.grid import GridSpec
from utils.exceptions import GridMismatchError, InvalidFieldError


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SpectralVecField:
    """
    Fourier-series coefficients of a real 2-component velocity field.

    ``coeffs[c, i, j]`` is the coefficient of component c at the wavevector
    (kx[i, j], ky[i, j]) of the grid, normalized so that the field mean is
    ``coeffs[:, 0, 0]``.
    """
    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.shape != (2, n, n):
            raise GridMismatchError(f"expected coefficients of shape (2, {n}, {n}), got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InvalidFieldError("spectral field contains non-finite coefficients")
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((2, grid.n, grid.n), dtype=complex))

    def _check_grid(self, other):
        if self.grid != other.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid.describe()} vs {other.grid.describe()}")

    def __add__(self, other):
        self._check_grid(other)
        return SpectralVecField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_grid(other)
        return SpectralVecField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralVecField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        return SpectralVecField(self.grid, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def divergence_residual(self):
        """max_k |k . u(k)|."""
        div = self.grid.kx * self.coeffs[0] + self.grid.ky * self.coeffs[1]
        return float(np.max(np.abs(div)))

    def symmetry_residual(self):
        """max_k |u(-k) - conj(u(k))|."""
        flipped = np.roll(self.coeffs[:, ::-1, ::-1], 1, axis=(1, 2))
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    def mean_residual(self):
        return float(np.max(np.abs(self.coeffs[:, 0, 0])))

    def out_of_band_residual(self):
        return float(np.max(np.abs(self.coeffs[:, ~self.grid.band_mask])))

    def check_invariants(self, tol=1e-12):
        """Raise InvalidFieldError unless the field is real, solenoidal, mean-zero and band-limited."""
        scale = max(float(np.max(np.abs(self.coeffs))), 1.0)
        problems = []
        if self.symmetry_residual() > tol * scale:
            problems.append("conjugate symmetry")
        if self.divergence_residual() > tol * scale * max(1.0, np.sqrt(np.max(self.grid.k2))):
            problems.append("divergence-free")
        if self.mean_residual() > tol * scale:
            problems.append("zero mean")
        if self.out_of_band_residual() > tol * scale:
            problems.append("band limit")
        if problems:
            raise InvalidFieldError(f"field violates: {', '.join(problems)}")
        return self


@dataclass(frozen=True, eq=False)
class PhysicalVecField:
    """Real 2-vector samples ``samples[c, i, j]`` at x = i*dx, y = j*dx."""
    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        samples = np.array(self.samples, dtype=float)
        if samples.shape != (2, n, n):
            raise GridMismatchError(f"expected samples of shape (2, {n}, {n}), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidFieldError("physical field contains non-finite samples")
        object.__setattr__(self, "samples", _frozen(samples))

    @property
    def magnitude(self):
        return np.sqrt(self.samples[0] ** 2 + self.samples[1] ** 2)


@dataclass(frozen=True, eq=False)
class FieldSeries:
    """Spectral fields at the nodes t_0..t_N of a uniform time grid."""
    grid: GridSpec
    dt: float
    coeffs: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.ndim != 4 or coeffs.shape[1:] != (2, n, n):
            raise GridMismatchError(f"expected series of shape (N+1, 2, {n}, {n}), got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InvalidFieldError("series contains non-finite coefficients")
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    @classmethod
    def zeros(cls, grid, n_steps, dt):
        return cls(grid, dt, np.zeros((n_steps + 1, 2, grid.n, grid.n), dtype=complex))

    @classmethod
    def constant(cls, field, n_steps, dt):
        return cls(field.grid, dt, np.broadcast_to(field.coeffs, (n_steps + 1,) + field.coeffs.shape))

    @classmethod
    def from_fields(cls, fields, dt):
        fields = list(fields)
        return cls(fields[0].grid, dt, np.stack([f.coeffs for f in fields]))

    @property
    def n_steps(self):
        return self.coeffs.shape[0] - 1

    def __len__(self):
        return self.coeffs.shape[0]

    def at(self, index):
        return SpectralVecField(self.grid, self.coeffs[index])

    def __add__(self, other):
        return FieldSeries(self.grid, self.dt, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FieldSeries(self.grid, self.dt, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return FieldSeries(self.grid, self.dt, float(scalar) * self.coeffs)

    __rmul__ = __mul__
