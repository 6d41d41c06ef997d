from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from models.control import ControlOperatorD
from models.field import FieldSeries, SpectralVecField
from models.grid import GridSpec
from models.params import CbfParams
from utils.exceptions import AlignmentError, CheckpointError, GridMismatchError


@dataclass(frozen=True, eq=False)
class StepInputs:
    """Everything the state stepper needs to replay a run: parameters and nodal sources."""
    params: CbfParams
    control_op: ControlOperatorD
    controls: np.ndarray
    forcing: np.ndarray

    @property
    def control_forcing(self):
        """D U_n at every node."""
        return self.control_op.apply_coeffs(self.controls)

    @property
    def sources(self):
        return self.forcing + self.control_forcing


@dataclass(eq=False)
class Trajectory:
    """
    Uniform-step time series of spectral states with a checkpoint policy.

    Only the states at multiples of ``checkpoint_stride`` (and both endpoints)
    are kept; a forward trajectory also records its ``inputs`` so the states
    in between can be recomputed bit-for-bit.
    """
    grid: GridSpec
    dt: float
    n_steps: int
    checkpoint_stride: int
    checkpoints: Dict[int, np.ndarray] = field(default_factory=dict)
    inputs: Optional[StepInputs] = None
    direction: str = "forward"

    @property
    def T(self):
        return self.n_steps * self.dt

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def checkpoint_steps(self):
        return sorted(self.checkpoints)

    def is_complete(self):
        return len(self.checkpoints) == self.n_steps + 1

    def state(self, step):
        """Stored state at ``step``; raises CheckpointError if it was not kept."""
        if step not in self.checkpoints:
            raise CheckpointError(f"state at step {step} is not stored (stride {self.checkpoint_stride})")
        return SpectralVecField(self.grid, self.checkpoints[step])

    @property
    def initial_state(self):
        return self.state(0)

    @property
    def final_state(self):
        return self.state(self.n_steps)

    def as_series(self):
        """All states as a FieldSeries (only for fully stored trajectories)."""
        if not self.is_complete():
            raise CheckpointError("trajectory keeps only checkpoints; replay it to get every state")
        return FieldSeries(self.grid, self.dt, np.stack([self.checkpoints[i] for i in range(self.n_steps + 1)]))

    def check_aligned(self, series, what="series"):
        """Raise unless ``series`` (a FieldSeries) lives on this grid and time grid."""
        if series.grid != self.grid:
            raise GridMismatchError(f"{what} lives on a different grid than the trajectory")
        if series.n_steps != self.n_steps or abs(series.dt - self.dt) > 1e-12 * self.dt:
            raise AlignmentError(
                f"{what} has {series.n_steps} steps of {series.dt}, trajectory has {self.n_steps} of {self.dt}"
            )


@dataclass(eq=False)
class AdjointTrajectory(Trajectory):
    """
    Backward solution of the discrete adjoint.

    ``checkpoints`` holds the state cotangents lambda_n (lambda_0 is p(0));
    ``source_sensitivity[n]`` is the cotangent of the source at node n, and
    dividing it by the trapezoid weight gives the adjoint series p_n used in
    gradients.
    """
    source_sensitivity: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    @property
    def p0(self):
        return self.state(0)

    @property
    def p_series(self):
        safe = np.where(self.weights > 0, self.weights, 1.0)
        return self.source_sensitivity / safe[:, None, None, None]


@dataclass(frozen=True, eq=False)
class AdjointSpec:
    """Terminal datum p_T and right-hand side h(t) of the adjoint system."""
    terminal: SpectralVecField
    rhs: FieldSeries

    @classmethod
    def zeros(cls, grid, n_steps, dt):
        return cls(SpectralVecField.zeros(grid), FieldSeries.zeros(grid, n_steps, dt))


@dataclass(eq=False)
class EnergyLedger:
    """
    Per-node terms of the energy balance of one forward run.

    ``equality_residual[n]`` is ||u(t_n)||^2 + 2 int (viscous + darcy + forchheimer)
    - ||u_0||^2 - 2 int (work_f + work_DU), trapezoid in time.
    """
    times: np.ndarray
    kinetic: np.ndarray
    viscous: np.ndarray
    darcy: np.ndarray
    forchheimer: np.ndarray
    work_f: np.ndarray
    work_DU: np.ndarray
    equality_residual: np.ndarray
    bound_K_T: float = 0.0

    COLUMNS = ("t", "kinetic", "viscous", "darcy", "forchheimer", "work_f", "work_DU", "equality_residual")

    def as_columns(self):
        values = (self.times, self.kinetic, self.viscous, self.darcy, self.forchheimer,
                  self.work_f, self.work_DU, self.equality_residual)
        return dict(zip(self.COLUMNS, values))
