from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from utils.exceptions import ParameterError


class DealiasRule(str, Enum):
    TWO_THIRDS = "two_thirds"
    ONE_HALF = "one_half"


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform n x n grid on the periodic square of side ``length``.

    Every field stored on the grid is band-limited to the modes retained by
    ``dealias_rule``: integer wavenumbers with |k_x|, |k_y| < n/3 (TwoThirds)
    or < n/4 (OneHalf). The mean mode is never retained.
    """
    n: int
    length: float = 2 * np.pi
    dealias_rule: DealiasRule = DealiasRule.TWO_THIRDS

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            raise ParameterError(f"grid size must be an even integer >= 8, got {self.n}")
        if not self.length > 0:
            raise ParameterError(f"torus side must be positive, got {self.length}")
        object.__setattr__(self, "dealias_rule", DealiasRule(self.dealias_rule))

    @classmethod
    def for_exponent(cls, n, r, length=2 * np.pi):
        """Grid whose dealias rule matches the degree of the absorption term."""
        rule = DealiasRule.ONE_HALF if r == 3 else DealiasRule.TWO_THIRDS
        return cls(n=n, length=length, dealias_rule=rule)

    @property
    def lambda1(self):
        return (2 * np.pi / self.length) ** 2

    @property
    def dx(self):
        return self.length / self.n

    @property
    def cell_area(self):
        return self.dx ** 2

    @property
    def band_limit(self):
        """Largest retained integer wavenumber per direction."""
        if self.dealias_rule is DealiasRule.ONE_HALF:
            return (self.n - 1) // 4
        return (self.n - 1) // 3

    @cached_property
    def integer_wavenumbers(self):
        return np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(int)

    @cached_property
    def kx(self):
        k = 2 * np.pi / self.length * self.integer_wavenumbers
        return np.broadcast_to(k[:, None], (self.n, self.n))

    @cached_property
    def ky(self):
        k = 2 * np.pi / self.length * self.integer_wavenumbers
        return np.broadcast_to(k[None, :], (self.n, self.n))

    @cached_property
    def k2(self):
        return self.kx ** 2 + self.ky ** 2

    @cached_property
    def k2_safe(self):
        k2 = self.k2.copy()
        k2[0, 0] = 1.0
        return k2

    @cached_property
    def band_mask(self):
        m = np.abs(self.integer_wavenumbers) <= self.band_limit
        mask = m[:, None] & m[None, :]
        mask = mask.copy()
        mask[0, 0] = False
        return mask

    @cached_property
    def coordinates(self):
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, indexing='ij')

    def describe(self):
        return f"n={self.n}, L={self.length:.6g}, dealias={self.dealias_rule.value}, K={self.band_limit}"
