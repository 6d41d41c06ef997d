"""
Tangent of the discrete state stepper along a stored trajectory.

The linearized system

    dw/dt + mu A w + B'(u(t)) w + alpha w + beta C'(u(t)) w = g

is integrated as the exact derivative of the integrating-factor Heun step,
so the stage-2 Jacobian is taken at the predictor of the state step.
"""
from typing import List, Optional, Sequence

import numpy as np

from kernels.operators import Linearization
from kernels.spectral import dealias_project, inner_coeffs
from models.control import ControlOperatorD, ForcingSpec
from models.field import FieldSeries, SpectralVecField
from models.params import CbfParams
from models.trajectory import Trajectory
from services.forward_solver_service import (
    all_states,
    check_state,
    linear_factor,
    replay_segment,
    segments,
    solve_forward,
)
from utils.exceptions import BlowupError, CbfError, GridMismatchError, ParameterError
from utils.helpers import loglog_slope, trapezoid_weights
from utils.logger import get_logger

logger = get_logger(__name__)


def _source_coeffs(state_traj, g):
    if g is None:
        return np.zeros((state_traj.n_steps + 1, 2, state_traj.grid.n, state_traj.grid.n), dtype=complex)
    state_traj.check_aligned(g, "linearized source")
    return dealias_project(g.coeffs, state_traj.grid)


def solve_linearized(
    state_traj: Trajectory,
    params: CbfParams,
    w0: SpectralVecField,
    g: Optional[FieldSeries] = None,
) -> Trajectory:
    """
    Solve the linearized system along ``state_traj``.

    Args:
        state_traj: forward trajectory with replayable checkpoints
        params: physical coefficients of the state run
        w0: initial perturbation
        g: source at the N+1 time nodes (zero by default)

    Returns:
        Fully stored trajectory of w
    """
    grid = state_traj.grid
    if w0.grid != grid:
        raise GridMismatchError("w0 lives on a different grid than the state trajectory")
    sources = _source_coeffs(state_traj, g)
    dt = state_traj.dt
    E = linear_factor(params, grid, dt)

    out = Trajectory(grid, dt, state_traj.n_steps, 1)
    w = dealias_project(w0.coeffs, grid)
    out.checkpoints[0] = w.copy()
    try:
        for start, stop in segments(state_traj):
            states, predictors = replay_segment(state_traj, start, stop)
            for i, n in enumerate(range(start, stop)):
                lin_u = Linearization(states[i], params, grid)
                lin_p = Linearization(predictors[i], params, grid)
                dk1 = sources[n] - lin_u.tangent(w)
                dpred = E * (w + dt * dk1)
                dk2 = sources[n + 1] - lin_p.tangent(dpred)
                w = E * w + 0.5 * dt * (E * dk1 + dk2)
                check_state(w, grid, n + 1)
                out.checkpoints[n + 1] = w.copy()
    except BlowupError as e:
        logger.error(f"Linearized solve blew up: {str(e)}")
        raise
    logger.debug(f"Linearized solve finished over {state_traj.n_steps} steps")
    return out


def _sup_distance(a, b, grid):
    return max(np.sqrt(inner_coeffs(x - y, x - y, grid)) for x, y in zip(a, b))


def gateaux_check(
    U_base: FieldSeries,
    U_dir: FieldSeries,
    params: CbfParams,
    u0: SpectralVecField,
    control_op: Optional[ControlOperatorD] = None,
    forcing: Optional[ForcingSpec] = None,
    T: float = 0.1,
    dt: float = 1e-2,
    tau_list: Sequence[float] = (1e-1, 1e-2, 1e-3),
):
    """
    Finite-difference test of the control-to-state derivative.

    e(tau) = sup_t ||u(U + tau U') - u(U) - tau w|| / tau, with w the linearized
    response to D U'. Returns (slope of log e against log tau, list of e(tau)).
    """
    tau_list = list(tau_list)
    if len(tau_list) < 3 or any(a <= b for a, b in zip(tau_list, tau_list[1:])):
        raise ParameterError("tau_list must hold at least three strictly decreasing values")
    control_op = control_op or ControlOperatorD.identity(u0.grid)
    grid = u0.grid
    try:
        base, _ = solve_forward(u0, params, control_op, U_base, forcing, T, dt)
        base_states = all_states(base)
        direction = FieldSeries(grid, dt, control_op.apply_coeffs(dealias_project(U_dir.coeffs, grid)))
        w = solve_linearized(base, params, SpectralVecField.zeros(grid), direction).as_series().coeffs
        errors: List[float] = []
        for tau in tau_list:
            perturbed, _ = solve_forward(u0, params, control_op, U_base + tau * U_dir, forcing, T, dt)
            errors.append(_sup_distance(all_states(perturbed), base_states + tau * w, grid) / tau)
    except CbfError as e:
        logger.error(f"Gateaux check failed: {str(e)}")
        raise
    slope = loglog_slope(tau_list, errors) if max(errors) > 0 else float("inf")
    logger.info(f"Gateaux check: e(tau) = {['%.3e' % e for e in errors]}, slope = {slope:.3f}")
    return slope, errors


def lipschitz_estimate(
    U_base: FieldSeries,
    U_dir: FieldSeries,
    params: CbfParams,
    u0: SpectralVecField,
    control_op: Optional[ControlOperatorD] = None,
    forcing: Optional[ForcingSpec] = None,
    T: float = 0.1,
    dt: float = 1e-2,
    tau_list: Sequence[float] = (1e-1, 5e-2, 2.5e-2),
):
    """
    Control-to-state Lipschitz constants sup_t ||u(U + tau U') - u(U)|| / tau.

    Returns (constants per tau, analytic bound) where the bound is
    sqrt((2/mu) ||D||^2 int ||U'||^2 exp(8 K_T / mu^2)) evaluated with the base run's K_T.
    """
    control_op = control_op or ControlOperatorD.identity(u0.grid)
    grid = u0.grid
    base, ledger = solve_forward(u0, params, control_op, U_base, forcing, T, dt)
    base_states = all_states(base)
    constants = []
    for tau in tau_list:
        perturbed, _ = solve_forward(u0, params, control_op, U_base + tau * U_dir, forcing, T, dt)
        constants.append(_sup_distance(all_states(perturbed), base_states, grid) / tau)
    weights = trapezoid_weights(base.n_steps, dt)
    dir_coeffs = dealias_project(U_dir.coeffs, grid)
    dir_sq = sum(c * inner_coeffs(U, U, grid) for c, U in zip(weights, dir_coeffs))
    with np.errstate(over="ignore"):
        bound = np.sqrt(2.0 / params.mu * control_op.operator_norm_bound ** 2 * dir_sq
                        * np.exp(8.0 * ledger.bound_K_T / params.mu ** 2))
    logger.info(f"Lipschitz constants {['%.4g' % c for c in constants]} against bound {bound:.4g}")
    return constants, float(bound)


def linearized_energy_bound_check(
    state_traj: Trajectory,
    params: CbfParams,
    w_traj: Trajectory,
    g: Optional[FieldSeries] = None,
) -> float:
    """
    (||w_0||^2 + (2 / (mu lambda_1)) int ||g||^2) exp((4/mu) int ||u||_V^2) - sup_t ||w(t)||^2.
    """
    grid = state_traj.grid
    weights = trapezoid_weights(state_traj.n_steps, state_traj.dt)
    sources = _source_coeffs(state_traj, g)
    states = all_states(state_traj)
    enstrophy = sum(c * inner_coeffs(u, u, grid, weight=grid.k2) for c, u in zip(weights, states))
    g_sq = sum(c * inner_coeffs(s, s, grid) for c, s in zip(weights, sources))
    w = w_traj.as_series().coeffs
    sup_w = max(inner_coeffs(x, x, grid) for x in w)
    with np.errstate(over="ignore"):
        bound = (inner_coeffs(w[0], w[0], grid) + 2.0 / (params.mu * grid.lambda1) * g_sq) * np.exp(4.0 / params.mu * enstrophy)
    return float(bound - sup_w)
