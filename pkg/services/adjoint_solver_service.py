"""
Discrete adjoint of the integrating-factor Heun stepper.

The backward sweep transposes the tangent step stage by stage. For a
perturbation (w_0, g) of initial state and sources it yields the identity

    <w_N, p_T> + sum_n c_n <w_n, h_n> = <w_0, lambda_0> + sum_n c_n <g_n, p_n>

with trapezoid weights c_n, which is what gradients are built on.
"""
import time
from typing import Optional

import numpy as np

from kernels.operators import Linearization
from kernels.spectral import dealias_project, inner_coeffs
from models.field import FieldSeries, SpectralVecField
from models.params import CbfParams
from models.trajectory import AdjointSpec, AdjointTrajectory, Trajectory
from services.forward_solver_service import all_states, check_state, linear_factor, replay_segment, segments
from services.linearized_solver_service import solve_linearized
from utils.exceptions import BlowupError, CbfError, GridMismatchError
from utils.helpers import trapezoid_weights
from utils.logger import get_logger

logger = get_logger(__name__)


def solve_adjoint(state_traj: Trajectory, params: CbfParams, spec: AdjointSpec) -> AdjointTrajectory:
    """
    March the adjoint system from T back to 0 along ``state_traj``.

    Each checkpoint segment of the state is recomputed once, then swept
    backwards with the linearizations at the states and predictors.

    Args:
        state_traj: forward trajectory with replayable checkpoints
        params: physical coefficients of the state run
        spec: terminal datum p_T and right-hand side h

    Returns:
        AdjointTrajectory holding lambda_n at every node and the source sensitivities
    """
    grid = state_traj.grid
    if spec.terminal.grid != grid:
        raise GridMismatchError("adjoint terminal datum lives on a different grid than the state")
    state_traj.check_aligned(spec.rhs, "adjoint right-hand side")
    n_steps, dt = state_traj.n_steps, state_traj.dt
    weights = trapezoid_weights(n_steps, dt)
    E = linear_factor(params, grid, dt)
    rhs = dealias_project(spec.rhs.coeffs, grid)
    start_time = time.perf_counter()

    out = AdjointTrajectory(grid, dt, n_steps, 1, direction="backward", weights=weights)
    sensitivity = np.zeros((n_steps + 1, 2, grid.n, grid.n), dtype=complex)
    lam = dealias_project(spec.terminal.coeffs, grid) + weights[n_steps] * rhs[n_steps]
    out.checkpoints[n_steps] = lam.copy()
    try:
        for start, stop in reversed(segments(state_traj)):
            states, predictors = replay_segment(state_traj, start, stop)
            for i in reversed(range(stop - start)):
                n = start + i
                bar_k2 = 0.5 * dt * lam
                bar_pred = -Linearization(predictors[i], params, grid).adjoint(bar_k2)
                bar_k1 = 0.5 * dt * E * lam + dt * E * bar_pred
                lam = E * lam + E * bar_pred - Linearization(states[i], params, grid).adjoint(bar_k1) + weights[n] * rhs[n]
                sensitivity[n + 1] += bar_k2
                sensitivity[n] += bar_k1
                check_state(lam, grid, n)
                out.checkpoints[n] = lam.copy()
    except BlowupError as e:
        logger.error(f"Adjoint solve blew up: {str(e)}")
        raise
    out.source_sensitivity = sensitivity
    logger.debug(f"Adjoint solve finished in {time.perf_counter() - start_time:.2f}s")
    return out


def duality_check(
    state_traj: Trajectory,
    params: CbfParams,
    w0: SpectralVecField,
    g: Optional[FieldSeries],
    spec: AdjointSpec,
) -> float:
    """
    Relative defect of the discrete duality identity between the linearized
    solution for (w0, g) and the adjoint solution for ``spec``.
    """
    grid = state_traj.grid
    try:
        w = solve_linearized(state_traj, params, w0, g).as_series().coeffs
        adj = solve_adjoint(state_traj, params, spec)
    except CbfError as e:
        logger.error(f"Duality check failed: {str(e)}")
        raise
    weights = adj.weights
    rhs = dealias_project(spec.rhs.coeffs, grid)
    terminal = dealias_project(spec.terminal.coeffs, grid)
    sources = np.zeros_like(w) if g is None else dealias_project(g.coeffs, grid)
    p = adj.p_series

    lhs_terms = [inner_coeffs(w[-1], terminal, grid)]
    lhs_terms += [c * inner_coeffs(wn, hn, grid) for c, wn, hn in zip(weights, w, rhs)]
    rhs_terms = [inner_coeffs(w[0], adj.checkpoints[0], grid)]
    rhs_terms += [c * inner_coeffs(gn, pn, grid) for c, gn, pn in zip(weights, sources, p)]
    scale = sum(abs(t) for t in lhs_terms + rhs_terms)
    if scale == 0:
        return 0.0
    return float(abs(sum(lhs_terms) - sum(rhs_terms)) / scale)


def adjoint_energy_bound_check(state_traj: Trajectory, params: CbfParams, spec: AdjointSpec,
                               adj: Optional[AdjointTrajectory] = None) -> float:
    """
    (||p_T||^2 + (2 / (mu lambda_1)) int ||h||^2) exp((4/mu) int ||u||_V^2) - sup_t ||p(t)||^2.
    """
    grid = state_traj.grid
    adj = adj or solve_adjoint(state_traj, params, spec)
    weights = adj.weights
    states = all_states(state_traj)
    rhs = dealias_project(spec.rhs.coeffs, grid)
    terminal = dealias_project(spec.terminal.coeffs, grid)
    enstrophy = sum(c * inner_coeffs(u, u, grid, weight=grid.k2) for c, u in zip(weights, states))
    h_sq = sum(c * inner_coeffs(h, h, grid) for c, h in zip(weights, rhs))
    sup_p = max(inner_coeffs(lam, lam, grid) for lam in adj.checkpoints.values())
    with np.errstate(over="ignore"):
        bound = (inner_coeffs(terminal, terminal, grid) + 2.0 / (params.mu * grid.lambda1) * h_sq) \
            * np.exp(4.0 / params.mu * enstrophy)
    return float(bound - sup_p)


def continuous_adjoint_residual(state_traj: Trajectory, params: CbfParams, spec: AdjointSpec,
                                adj: Optional[AdjointTrajectory] = None) -> float:
    """
    Residual of -dp/dt + mu A p + B'(u)* p + alpha p + beta C'(u) p - h on the
    discrete adjoint, with central differences at interior nodes; relative to
    the size of the data. Shrinks as dt is refined.
    """
    grid = state_traj.grid
    adj = adj or solve_adjoint(state_traj, params, spec)
    dt = state_traj.dt
    n_steps = state_traj.n_steps
    states = all_states(state_traj)
    lam = np.stack([adj.checkpoints[i] for i in range(n_steps + 1)])
    rhs = dealias_project(spec.rhs.coeffs, grid)
    linear = params.mu * grid.k2 + params.alpha

    residual_sq = 0.0
    for n in range(1, n_steps):
        dpdt = (lam[n + 1] - lam[n - 1]) / (2 * dt)
        res = -dpdt + linear * lam[n] + Linearization(states[n], params, grid).adjoint(lam[n]) - rhs[n]
        residual_sq += dt * inner_coeffs(res, res, grid)
    data = sum(dt * inner_coeffs(h, h, grid) for h in rhs) + inner_coeffs(lam[-1], lam[-1], grid)
    return float(np.sqrt(residual_sq / max(data, 1e-300)))
