"""
Time integration of the controlled state equation

    du/dt + mu A u + B(u, u) + alpha u + beta C(u) = f + D U

with an integrating-factor Heun scheme, plus energy diagnostics.
"""
import time
from typing import Optional, Tuple

import numpy as np

from config import CBF_CHECKPOINT_STRIDE
from kernels.operators import Linearization
from kernels.spectral import dealias_project, inner_coeffs, inverse_fft, quadrature
from models.control import ControlOperatorD, ForcingSpec
from models.field import FieldSeries, SpectralVecField
from models.grid import DealiasRule
from models.params import CbfParams
from models.trajectory import EnergyLedger, StepInputs, Trajectory
from utils.exceptions import AlignmentError, BlowupError, CbfError, CheckpointError, GridMismatchError, ParameterError
from utils.helpers import step_count, trapezoid_weights
from utils.logger import get_logger

logger = get_logger(__name__)

# Any state norm above this aborts the run
BLOWUP_THRESHOLD = 1e12


def linear_factor(params, grid, dt):
    """Per-mode integrating factor exp(-(mu |k|^2 + alpha) dt)."""
    return np.exp(-(params.mu * grid.k2 + params.alpha) * dt)


def check_state(u_hat, grid, step):
    if not np.all(np.isfinite(u_hat)):
        raise BlowupError(step, "state became non-finite")
    size = np.sqrt(inner_coeffs(u_hat, u_hat, grid))
    if size > BLOWUP_THRESHOLD:
        raise BlowupError(step, f"||u||_H = {size:.3e} exceeds {BLOWUP_THRESHOLD:.0e}")


class HeunStepper:
    """
    One step of the integrating-factor Heun scheme.

        k1 = N(u_n, t_n),  u~ = E (u_n + dt k1),  k2 = N(u~, t_{n+1}),
        u_{n+1} = E u_n + dt/2 (E k1 + k2),

    with E = exp(-(mu |k|^2 + alpha) dt) and N(u, t_n) = s_n - B(u, u) - beta C(u).
    """

    def __init__(self, grid, params, dt, sources):
        self.grid = grid
        self.params = params
        self.dt = dt
        self.sources = sources
        self.E = linear_factor(params, grid, dt)

    def rhs(self, u_hat, node):
        lin = Linearization(u_hat, self.params, self.grid)
        return self.sources[node] - lin.nonlinearity(), lin

    def step(self, u_hat, node):
        """Advance from node ``node``; returns (u_{n+1}, predictor, linearization at u_n)."""
        k1, lin = self.rhs(u_hat, node)
        predictor = self.E * (u_hat + self.dt * k1)
        k2, _ = self.rhs(predictor, node + 1)
        return self.E * u_hat + 0.5 * self.dt * (self.E * k1 + k2), predictor, lin


def build_inputs(grid, params, n_steps, dt, control_op=None, controls=None, forcing=None):
    """Validate and project the run inputs onto the retained band."""
    control_op = control_op or ControlOperatorD.identity(grid)
    if control_op.grid != grid:
        raise GridMismatchError("control operator lives on a different grid than the state")
    if controls is None:
        control_coeffs = np.zeros((n_steps + 1, 2, grid.n, grid.n), dtype=complex)
    else:
        if controls.grid != grid:
            raise GridMismatchError("controls live on a different grid than the state")
        if controls.n_steps != n_steps or abs(controls.dt - dt) > 1e-12 * dt:
            raise AlignmentError(f"controls have {controls.n_steps} steps of {controls.dt}, expected {n_steps} of {dt}")
        control_coeffs = dealias_project(controls.coeffs, grid)
    forcing = forcing or ForcingSpec.zero()
    return StepInputs(params, control_op, control_coeffs, forcing.series(grid, n_steps, dt))


def _ledger_terms(u_hat, lin, params, grid, forcing, control_forcing):
    kinetic = inner_coeffs(u_hat, u_hat, grid)
    viscous = params.mu * inner_coeffs(u_hat, u_hat, grid, weight=grid.k2)
    darcy = params.alpha * kinetic
    mag = np.sqrt(lin.u[0] ** 2 + lin.u[1] ** 2)
    forchheimer = params.beta * quadrature(mag ** (params.r + 1), grid)
    work_f = inner_coeffs(forcing, u_hat, grid)
    work_DU = inner_coeffs(control_forcing, u_hat, grid)
    return kinetic, viscous, darcy, forchheimer, work_f, work_DU


def _cumulative_trapezoid(values, dt):
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


def apriori_bound(u0_hat, inputs, grid, dt):
    """
    K_T = ||u_0||^2 + (2 / (mu lambda_1)) (int ||f||^2 + ||D||^2 int ||U||^2).

    The V' norms of the continuous estimate are bounded by lambda_1^{-1/2} ||.||_H.
    """
    weights = trapezoid_weights(inputs.controls.shape[0] - 1, dt)
    f_sq = sum(c * inner_coeffs(f, f, grid) for c, f in zip(weights, inputs.forcing))
    u_sq = sum(c * inner_coeffs(U, U, grid) for c, U in zip(weights, inputs.controls))
    scale = 2.0 / (inputs.params.mu * grid.lambda1)
    return inner_coeffs(u0_hat, u0_hat, grid) + scale * (f_sq + inputs.control_op.operator_norm_bound ** 2 * u_sq)


def solve_forward(
    u0: SpectralVecField,
    params: CbfParams,
    control_op: Optional[ControlOperatorD] = None,
    controls: Optional[FieldSeries] = None,
    forcing: Optional[ForcingSpec] = None,
    T: float = 1.0,
    dt: float = 1e-3,
    checkpoint_stride: int = CBF_CHECKPOINT_STRIDE,
) -> Tuple[Trajectory, EnergyLedger]:
    """
    Integrate the state equation on [0, T].

    Args:
        u0: initial state
        params: physical coefficients
        control_op: control operator D (identity by default)
        controls: control values U at the N+1 time nodes (zero by default)
        forcing: body force (zero by default)
        T: final time, an integer multiple of dt
        dt: step size
        checkpoint_stride: keep every this many states (plus both endpoints)

    Returns:
        The trajectory and its energy ledger
    """
    grid = u0.grid
    n_steps = step_count(T, dt)
    if n_steps is None:
        raise AlignmentError(f"T = {T} is not an integer multiple of dt = {dt}")
    if checkpoint_stride < 1:
        raise ParameterError(f"checkpoint stride must be >= 1, got {checkpoint_stride}")
    if params.r == 3 and grid.dealias_rule is DealiasRule.TWO_THIRDS:
        logger.warning("r = 3 on a two-thirds grid: cubic products are not alias-free (use GridSpec.for_exponent)")

    inputs = build_inputs(grid, params, n_steps, dt, control_op, controls, forcing)
    stepper = HeunStepper(grid, params, dt, inputs.sources)
    control_forcing = inputs.control_forcing
    start_time = time.perf_counter()
    logger.info(f"Forward solve: {grid.describe()}, {n_steps} steps of dt={dt:g}, r={params.r}")

    traj = Trajectory(grid, dt, n_steps, checkpoint_stride, inputs=inputs)
    terms = np.zeros((6, n_steps + 1))
    u_hat = dealias_project(u0.coeffs, grid)
    try:
        check_state(u_hat, grid, 0)
        for n in range(n_steps + 1):
            if n % checkpoint_stride == 0 or n == n_steps:
                traj.checkpoints[n] = u_hat.copy()
            if n == n_steps:
                lin = Linearization(u_hat, params, grid)
            else:
                u_next, _, lin = stepper.step(u_hat, n)
            terms[:, n] = _ledger_terms(u_hat, lin, params, grid, inputs.forcing[n], control_forcing[n])
            if n < n_steps:
                check_state(u_next, grid, n + 1)
                u_hat = u_next
    except BlowupError as e:
        logger.error(f"Forward solve blew up: {str(e)}")
        raise

    kinetic, viscous, darcy, forchheimer, work_f, work_DU = terms
    dissipation = _cumulative_trapezoid(viscous + darcy + forchheimer, dt)
    work = _cumulative_trapezoid(work_f + work_DU, dt)
    residual = kinetic + 2 * dissipation - kinetic[0] - 2 * work
    ledger = EnergyLedger(
        traj.times, kinetic, viscous, darcy, forchheimer, work_f, work_DU, residual,
        bound_K_T=apriori_bound(traj.checkpoints[0], inputs, grid, dt),
    )
    logger.info(
        f"Forward solve finished in {time.perf_counter() - start_time:.2f}s, "
        f"||u(T)||^2 = {kinetic[-1]:.6e}, max |energy residual| = {np.max(np.abs(residual)):.3e}"
    )
    return traj, ledger


def replay_segment(traj: Trajectory, start: int, stop: int):
    """
    Recompute states start..stop (and the predictors of steps start..stop-1)
    from the checkpoint at ``start``.
    """
    if traj.inputs is None:
        raise CheckpointError("trajectory carries no inputs to replay from")
    if start not in traj.checkpoints:
        raise CheckpointError(f"no checkpoint at step {start}")
    if not start <= stop <= traj.n_steps:
        raise CheckpointError(f"cannot replay steps {start}..{stop} of {traj.n_steps}")
    stepper = HeunStepper(traj.grid, traj.inputs.params, traj.dt, traj.inputs.sources)
    states = np.empty((stop - start + 1, 2, traj.grid.n, traj.grid.n), dtype=complex)
    predictors = np.empty((stop - start, 2, traj.grid.n, traj.grid.n), dtype=complex)
    states[0] = traj.checkpoints[start]
    for i, n in enumerate(range(start, stop)):
        states[i + 1], predictors[i], _ = stepper.step(states[i], n)
    if stop in traj.checkpoints and not np.array_equal(states[-1], traj.checkpoints[stop]):
        raise CheckpointError(f"replayed state at step {stop} differs from its checkpoint")
    return states, predictors


def replay(traj: Trajectory, step: int) -> SpectralVecField:
    """State at any step, re-integrated from the nearest earlier checkpoint."""
    if step in traj.checkpoints:
        return traj.state(step)
    earlier = [s for s in traj.checkpoint_steps if s <= step]
    if not earlier:
        raise CheckpointError(f"no checkpoint at or before step {step}")
    states, _ = replay_segment(traj, earlier[-1], step)
    return SpectralVecField(traj.grid, states[-1])


def segments(traj: Trajectory):
    """Consecutive checkpoint pairs (start, stop) covering [0, N]."""
    steps = traj.checkpoint_steps
    return list(zip(steps[:-1], steps[1:]))


def all_states(traj: Trajectory) -> np.ndarray:
    """Every state u_0..u_N as one (N+1, 2, n, n) array."""
    if traj.is_complete():
        return np.stack([traj.checkpoints[i] for i in range(traj.n_steps + 1)])
    out = np.empty((traj.n_steps + 1, 2, traj.grid.n, traj.grid.n), dtype=complex)
    out[0] = traj.checkpoints[0]
    for start, stop in segments(traj):
        states, _ = replay_segment(traj, start, stop)
        out[start:stop + 1] = states
    return out


def energy_equality_residual(traj: Trajectory, ledger: EnergyLedger) -> float:
    """Largest energy-balance defect over the run, normalized by ||u_0||^2 + 1."""
    return float(np.max(np.abs(ledger.equality_residual)) / (ledger.kinetic[0] + 1.0))


def apriori_bound_check(
    traj: Trajectory,
    ledger: EnergyLedger,
    params: Optional[CbfParams] = None,
    control_op: Optional[ControlOperatorD] = None,
    controls: Optional[FieldSeries] = None,
    forcing: Optional[ForcingSpec] = None,
) -> float:
    """
    K_T - max_t [||u(t)||^2 + mu int ||u||_V^2 + 2 alpha int ||u||^2 + 2 beta int ||u||_{L^{r+1}}^{r+1}].

    Any run input left as None is taken from the trajectory itself.
    """
    recorded = traj.inputs
    try:
        if recorded is None and None in (params, control_op, controls, forcing):
            raise CheckpointError("trajectory carries no inputs; pass params, control_op, controls and forcing")
        given = build_inputs(traj.grid, params or recorded.params, traj.n_steps, traj.dt,
                             control_op or recorded.control_op, controls, forcing)
        inputs = StepInputs(
            given.params,
            given.control_op,
            given.controls if controls is not None else recorded.controls,
            given.forcing if forcing is not None else recorded.forcing,
        )
        bound = apriori_bound(traj.checkpoints[0], inputs, traj.grid, traj.dt)
    except CbfError as e:
        logger.error(f"A-priori bound check failed: {str(e)}")
        raise
    lhs = (
        ledger.kinetic
        + _cumulative_trapezoid(ledger.viscous, traj.dt)
        + 2 * _cumulative_trapezoid(ledger.darcy + ledger.forchheimer, traj.dt)
    )
    return float(bound - np.max(lhs))


def suggest_dt(u0: SpectralVecField, cfl: float = 0.5) -> float:
    """Advective CFL step 0.5 dx / max|u| for the initial state (evaluated once, not adaptively)."""
    speed = np.max(np.abs(inverse_fft(u0.coeffs, u0.grid)))
    if speed == 0:
        return float(u0.grid.dx)
    return float(cfl * u0.grid.dx / speed)
