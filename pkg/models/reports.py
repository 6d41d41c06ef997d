import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAILED = "line_search_failed"


@dataclass
class OptimReport:
    """Iterate history of one optimization run; row 0 is the starting point."""
    costs: List[float] = field(default_factory=list)
    grad_norms: List[float] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    pontryagin_residuals: List[float] = field(default_factory=list)
    termination: Optional[Termination] = None
    started_at: float = field(default_factory=time.perf_counter)
    wall_clock: float = 0.0

    COLUMNS = ("iter", "cost", "grad_norm", "step", "pontryagin_residual")

    def record(self, cost, grad_norm, step, pontryagin_residual):
        self.costs.append(float(cost))
        self.grad_norms.append(float(grad_norm))
        self.steps.append(float(step))
        self.pontryagin_residuals.append(float(pontryagin_residual))

    def finish(self, termination):
        self.termination = Termination(termination)
        self.wall_clock = time.perf_counter() - self.started_at
        return self

    @property
    def iterations(self):
        return max(len(self.costs) - 1, 0)

    @property
    def final_cost(self):
        return self.costs[-1]

    @property
    def final_pontryagin_residual(self):
        return self.pontryagin_residuals[-1]

    def as_columns(self):
        return {
            "iter": np.arange(len(self.costs)),
            "cost": np.array(self.costs),
            "grad_norm": np.array(self.grad_norms),
            "step": np.array(self.steps),
            "pontryagin_residual": np.array(self.pontryagin_residuals),
        }


@dataclass
class SecondOrderSample:
    """One sampled perturbation around a candidate optimum."""
    perturbation_norm: float
    Q: float
    increment: float
    first_order: float


@dataclass
class SecondOrderReport:
    samples: List[SecondOrderSample]
    pontryagin_residual: float
    tolerance: float

    @property
    def min_Q(self):
        return min(s.Q for s in self.samples)

    @property
    def locally_optimal(self):
        """Stationary up to tolerance and every sampled Q strictly positive."""
        return self.pontryagin_residual <= self.tolerance and all(s.Q > 0 for s in self.samples)


@dataclass
class MultistartEntry:
    T: float
    n_starts: int
    max_distance: float
    optimum_norm: float
    final_costs: List[float]

    @property
    def relative_distance(self):
        return self.max_distance / self.optimum_norm if self.optimum_norm > 0 else self.max_distance


@dataclass
class CheckResult:
    name: str
    margin: float
    tolerance: float
    passed: bool
    detail: str = ""
