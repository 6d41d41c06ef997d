from dataclasses import dataclass

import numpy as np

from utils.exceptions import ParameterError


@dataclass(frozen=True)
class CbfParams:
    """
    Physical coefficients of the damped Navier-Stokes (Brinkman-Forchheimer) model.

    Args:
        mu: Brinkman viscosity, > 0
        alpha: Darcy coefficient, >= 0
        beta: Forchheimer coefficient, >= 0
        r: absorption exponent, one of 1, 2, 3
    """
    mu: float
    alpha: float = 0.0
    beta: float = 0.0
    r: int = 3

    def __post_init__(self):
        for name in ("mu", "alpha", "beta"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
        if not self.mu > 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if self.alpha < 0 or self.beta < 0:
            raise ParameterError(f"alpha and beta must be non-negative, got {self.alpha}, {self.beta}")
        if self.r not in (1, 2, 3):
            raise ParameterError(f"absorption exponent must be 1, 2 or 3, got {self.r}")

    @property
    def critical_monotone(self):
        """True when r = 3 and 2*beta*mu >= 1, the regime with global monotonicity."""
        return self.r == 3 and 2 * self.beta * self.mu >= 1

    def as_dict(self):
        return {"mu": self.mu, "alpha": self.alpha, "beta": self.beta, "r": self.r}
