from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from models.control import ControlOperatorD, ForcingSpec
from models.field import FieldSeries, SpectralVecField
from models.params import CbfParams
from utils.exceptions import AlignmentError, GridMismatchError, ParameterError
from utils.helpers import step_count


def _check_weights(**weights):
    for name, value in weights.items():
        if not np.isfinite(value) or value < 0:
            raise ParameterError(f"{name} must be a finite non-negative weight, got {value}")


@dataclass(frozen=True, eq=False)
class CostConfig:
    """
    Quadratic tracking cost

        w_track int ||u - u_d||^2 + w_enstrophy int ||u||_V^2 + w_control int ||U||^2 + w_terminal ||u(T) - u_f||^2.

    ``target`` (u_d) and ``terminal_target`` (u_f) default to zero.
    """
    control_op: ControlOperatorD
    target: Optional[FieldSeries] = None
    terminal_target: Optional[SpectralVecField] = None
    w_track: float = 0.5
    w_enstrophy: float = 0.5
    w_control: float = 0.5
    w_terminal: float = 0.5
    h_kind: str = "quadratic"

    def __post_init__(self):
        _check_weights(w_track=self.w_track, w_enstrophy=self.w_enstrophy,
                       w_control=self.w_control, w_terminal=self.w_terminal)
        if self.h_kind != "quadratic":
            raise ParameterError(f"only the quadratic control cost is supported, got {self.h_kind!r}")
        # h(U) = w_control ||U||^2 must be coercive: kappa_1 = w_control > 0
        if self.w_control <= 0:
            raise ParameterError("w_control must be positive for the control cost to be coercive")
        grid = self.control_op.grid
        if self.target is not None and self.target.grid != grid:
            raise GridMismatchError("target trajectory lives on a different grid than the control operator")
        if self.terminal_target is not None and self.terminal_target.grid != grid:
            raise GridMismatchError("terminal target lives on a different grid than the control operator")

    @property
    def grid(self):
        return self.control_op.grid

    @property
    def coercivity(self):
        """(kappa_1, kappa_2) with h(U) >= kappa_1 ||U||^2 - kappa_2."""
        return self.w_control, 0.0

    @property
    def growth(self):
        """(kappa_1, kappa_2) with h(U) <= kappa_1 ||U||^2 + kappa_2."""
        return self.w_control, 0.0

    def target_coeffs(self, n_steps, dt):
        grid = self.grid
        if self.target is None:
            return np.zeros((n_steps + 1, 2, grid.n, grid.n), dtype=complex)
        if self.target.n_steps != n_steps or abs(self.target.dt - dt) > 1e-12 * dt:
            raise AlignmentError(f"target has {self.target.n_steps} steps of {self.target.dt}, expected {n_steps} of {dt}")
        return self.target.coeffs

    def terminal_coeffs(self):
        if self.terminal_target is None:
            return np.zeros((2, self.grid.n, self.grid.n), dtype=complex)
        return self.terminal_target.coeffs


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Distributed control problem: state data, horizon and cost."""
    params: CbfParams
    u0: SpectralVecField
    cost: CostConfig
    T: float
    dt: float
    forcing: ForcingSpec = field(default_factory=ForcingSpec.zero)

    def __post_init__(self):
        if self.u0.grid != self.cost.grid:
            raise GridMismatchError("initial state and control operator live on different grids")
        if step_count(self.T, self.dt) is None:
            raise AlignmentError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")

    @property
    def grid(self):
        return self.u0.grid

    @property
    def n_steps(self):
        return step_count(self.T, self.dt)

    @property
    def control_op(self):
        return self.cost.control_op


@dataclass(frozen=True, eq=False)
class AssimConfig:
    """
    Initial-data assimilation problem built on a measured trajectory u_M.

    The cost is w_track int ||u - u_M||^2 + w_enstrophy int ||u||_V^2
    + w_init ||U||^2 + w_terminal ||u(T) - u_M(T)||^2 over initial data U.
    """
    measurements: FieldSeries
    terminal_measurement: SpectralVecField
    noise_level: float = 0.0
    w_track: float = 0.5
    w_enstrophy: float = 0.0
    w_init: float = 1e-4
    w_terminal: float = 0.5
    truth: Optional[SpectralVecField] = None

    def __post_init__(self):
        _check_weights(w_track=self.w_track, w_enstrophy=self.w_enstrophy,
                       w_init=self.w_init, w_terminal=self.w_terminal, noise_level=self.noise_level)
        if self.w_init <= 0:
            raise ParameterError("w_init must be positive")
        if self.terminal_measurement.grid != self.measurements.grid:
            raise GridMismatchError("terminal measurement lives on a different grid than the measurements")

    @property
    def grid(self):
        return self.measurements.grid

    @property
    def dt(self):
        return self.measurements.dt

    @property
    def n_steps(self):
        return self.measurements.n_steps

    @property
    def T(self):
        return self.n_steps * self.dt


class OptimMethod(str, Enum):
    GRADIENT_DESCENT = "gradient_descent"
    NONLINEAR_CG = "nonlinear_cg"
    LBFGS = "lbfgs"


@dataclass(frozen=True)
class OptimizerConfig:
    method: OptimMethod = OptimMethod.LBFGS
    memory: int = 5
    c1: float = 1e-4
    rho: float = 0.5
    max_backtracks: int = 40
    grad_tol: float = 1e-6
    grad_atol: float = 1e-12
    max_iters: int = 100
    initial_step: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", OptimMethod(self.method))
        if not 0 < self.c1 < 1:
            raise ParameterError(f"Armijo constant must lie in (0, 1), got {self.c1}")
        if not 0 < self.rho < 1:
            raise ParameterError(f"backtracking factor must lie in (0, 1), got {self.rho}")
        if self.memory < 1 or self.max_backtracks < 1 or self.max_iters < 0:
            raise ParameterError("memory and max_backtracks must be >= 1, max_iters >= 0")
        if self.grad_tol < 0 or self.grad_atol < 0 or self.initial_step <= 0:
            raise ParameterError("tolerances must be non-negative and the initial step positive")
