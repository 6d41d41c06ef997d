"""
Initial-data assimilation: recover u(0) from a measured trajectory u_M by
minimizing

    w_track int ||u - u_M||^2 + w_enstrophy int ||u||_V^2 + w_init ||U||^2 + w_terminal ||u(T) - u_M(T)||^2

over initial states U. The gradient is 2 w_init U + p(0).
"""
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from kernels.spectral import dealias_project, gaussian_unit_field, inner_coeffs
from models.control import ForcingSpec
from models.costs import AssimConfig, OptimizerConfig
from models.field import FieldSeries, SpectralVecField
from models.params import CbfParams
from models.reports import OptimReport
from models.trajectory import AdjointSpec, AdjointTrajectory
from services.adjoint_solver_service import solve_adjoint
from services.descent import minimize
from services.forward_solver_service import all_states, solve_forward
from services.optimal_control_service import check_second_order_exponent, second_order_remainder, stack_norms
from utils.exceptions import CbfError, GridMismatchError, ParameterError
from utils.helpers import trapezoid_weights
from utils.logger import get_logger

logger = get_logger(__name__)


class AssimilationService:
    """Twin experiments and variational recovery of initial data."""

    def __init__(self, params: CbfParams, forcing: Optional[ForcingSpec] = None,
                 opt_cfg: Optional[OptimizerConfig] = None):
        self.params = params
        self.forcing = forcing or ForcingSpec.zero()
        self.opt_cfg = opt_cfg or OptimizerConfig()

    # -- measurements ---------------------------------------------------------

    def generate_twin_data(
        self,
        truth_u0: SpectralVecField,
        T: float,
        dt: float,
        noise_level: float = 0.0,
        seed: int = 0,
        **weights,
    ) -> AssimConfig:
        """
        Synthetic measurements: the truth trajectory with every state perturbed by
        noise_level * ||state|| times a unit Gaussian admissible field.

        Args:
            truth_u0: initial state of the truth run
            T, dt: horizon and step
            noise_level: relative perturbation size
            seed: seed of the noise generator
            **weights: cost weights forwarded to AssimConfig
        """
        if noise_level < 0:
            raise ParameterError(f"noise level must be non-negative, got {noise_level}")
        grid = truth_u0.grid
        try:
            traj, _ = solve_forward(truth_u0, self.params, forcing=self.forcing, T=T, dt=dt)
        except CbfError as e:
            logger.error(f"Twin data generation failed: {str(e)}")
            raise
        states = all_states(traj)
        if noise_level > 0:
            rng = np.random.default_rng(seed)
            for n in range(len(states)):
                size = np.sqrt(inner_coeffs(states[n], states[n], grid))
                states[n] = states[n] + noise_level * size * gaussian_unit_field(grid, rng).coeffs
        logger.info(f"Twin data: {traj.n_steps + 1} measurements, noise level {noise_level:g}, seed {seed}")
        return AssimConfig(
            FieldSeries(grid, dt, states),
            SpectralVecField(grid, states[-1]),
            noise_level=noise_level,
            truth=truth_u0,
            **weights,
        )

    # -- cost and gradient ----------------------------------------------------

    def _solve(self, cfg, u0_coeffs):
        traj, _ = solve_forward(SpectralVecField(cfg.grid, u0_coeffs), self.params, forcing=self.forcing,
                                T=cfg.T, dt=cfg.dt)
        return traj, all_states(traj)

    def _cost(self, cfg, weights, states, u0_coeffs):
        grid = cfg.grid
        track = np.dot(weights, stack_norms(states - cfg.measurements.coeffs, grid))
        enstrophy = np.dot(weights, stack_norms(states, grid, grid.k2))
        terminal = inner_coeffs(states[-1] - cfg.terminal_measurement.coeffs,
                                states[-1] - cfg.terminal_measurement.coeffs, grid)
        return float(cfg.w_track * track + cfg.w_enstrophy * enstrophy
                     + cfg.w_init * inner_coeffs(u0_coeffs, u0_coeffs, grid) + cfg.w_terminal * terminal)

    def _adjoint_spec(self, cfg, states):
        grid = cfg.grid
        rhs = 2 * cfg.w_track * (states - cfg.measurements.coeffs) + 2 * cfg.w_enstrophy * grid.k2 * states
        terminal = 2 * cfg.w_terminal * (states[-1] - cfg.terminal_measurement.coeffs)
        return AdjointSpec(SpectralVecField(grid, terminal), FieldSeries(grid, cfg.dt, rhs))

    def cost_and_gradient(self, cfg: AssimConfig, u0_coeffs) -> Tuple[float, np.ndarray, AdjointTrajectory]:
        u0_coeffs = dealias_project(np.asarray(u0_coeffs), cfg.grid)
        traj, states = self._solve(cfg, u0_coeffs)
        adj = solve_adjoint(traj, self.params, self._adjoint_spec(cfg, states))
        weights = trapezoid_weights(cfg.n_steps, cfg.dt)
        grad = 2 * cfg.w_init * u0_coeffs + adj.checkpoints[0]
        return self._cost(cfg, weights, states, u0_coeffs), grad, adj

    def evaluate_cost(self, cfg: AssimConfig, u0: SpectralVecField) -> float:
        u0_coeffs = dealias_project(u0.coeffs, cfg.grid)
        _, states = self._solve(cfg, u0_coeffs)
        return self._cost(cfg, trapezoid_weights(cfg.n_steps, cfg.dt), states, u0_coeffs)

    def gradient(self, cfg: AssimConfig, u0: SpectralVecField) -> SpectralVecField:
        """2 w_init U + p(0)."""
        if u0.grid != cfg.grid:
            raise GridMismatchError("initial guess lives on a different grid than the measurements")
        _, grad, _ = self.cost_and_gradient(cfg, u0.coeffs)
        return SpectralVecField(cfg.grid, grad)

    # -- optimization -----------------------------------------------------------

    def assimilate(self, cfg: AssimConfig, initial: Optional[SpectralVecField] = None) -> Tuple[SpectralVecField, OptimReport]:
        """
        Recover the initial state from ``cfg``'s measurements.

        Args:
            cfg: measurements and cost weights
            initial: starting guess (zero by default)

        Returns:
            The estimated initial state and the optimizer report
        """
        grid = cfg.grid
        start_time = time.perf_counter()
        logger.info(f"Assimilation: {grid.describe()}, T={cfg.T:g}, w_init={cfg.w_init:g}, noise={cfg.noise_level:g}")
        x0 = np.zeros((2, grid.n, grid.n), dtype=complex) if initial is None else initial.coeffs

        def objective(x):
            cost, grad, _ = self.cost_and_gradient(cfg, x)
            return cost, grad

        def dot(a, b):
            return inner_coeffs(a, b, grid)

        try:
            x, report = minimize(objective, x0, dot, self.opt_cfg, residual=lambda g: float(np.sqrt(dot(g, g))))
        except CbfError as e:
            logger.error(f"Assimilation failed: {str(e)}")
            raise
        estimate = SpectralVecField(grid, x)
        if cfg.truth is not None:
            logger.info(f"Relative recovery error {self.recovery_error(estimate, cfg.truth):.3e}")
        logger.info(f"Assimilation finished in {time.perf_counter() - start_time:.2f}s, J = {report.final_cost:.6e}")
        return estimate, report

    @staticmethod
    def recovery_error(estimate: SpectralVecField, truth: SpectralVecField) -> float:
        """||estimate - truth||_H / ||truth||_H."""
        diff = estimate.coeffs - truth.coeffs
        error = np.sqrt(inner_coeffs(diff, diff, truth.grid))
        size = np.sqrt(inner_coeffs(truth.coeffs, truth.coeffs, truth.grid))
        return float(error / size) if size > 0 else float(error)

    def noise_sweep(
        self,
        truth_u0: SpectralVecField,
        T: float,
        dt: float,
        noise_levels: Sequence[float] = (1e-1, 1e-2, 0.0),
        seed: int = 0,
        **weights,
    ) -> List[Tuple[float, float]]:
        """Twin experiment per noise level; returns (noise_level, relative recovery error) pairs."""
        results = []
        for level in noise_levels:
            cfg = self.generate_twin_data(truth_u0, T, dt, level, seed, **weights)
            estimate, _ = self.assimilate(cfg)
            error = self.recovery_error(estimate, truth_u0)
            logger.info(f"Noise {level:g}: relative recovery error {error:.3e}")
            results.append((level, error))
        return results

    # -- second-order conditions --------------------------------------------

    def second_order_form(self, cfg: AssimConfig, u_star: SpectralVecField, perturb: SpectralVecField,
                          adj: Optional[AdjointTrajectory] = None) -> float:
        """
        Q(dU) = w_init ||dU||^2 + w_track int ||u||^2 + w_enstrophy int ||u||_V^2 + w_terminal ||u(T)||^2
                - int <B(u, u), p> - beta int <2 (u*.u) u + |u|^2 (u + u*), p>,

        with u the state difference caused by moving the initial state from u_star to u_star + dU.
        """
        check_second_order_exponent(self.params)
        grid = cfg.grid
        star = dealias_project(u_star.coeffs, grid)
        delta = dealias_project(perturb.coeffs, grid)
        weights = trapezoid_weights(cfg.n_steps, cfg.dt)
        if adj is None:
            _, _, adj = self.cost_and_gradient(cfg, star)
        _, star_states = self._solve(cfg, star)
        _, states = self._solve(cfg, star + delta)
        diff = states - star_states
        quadratic = (
            cfg.w_init * inner_coeffs(delta, delta, grid)
            + cfg.w_track * np.dot(weights, stack_norms(diff, grid))
            + cfg.w_enstrophy * np.dot(weights, stack_norms(diff, grid, grid.k2))
            + cfg.w_terminal * inner_coeffs(diff[-1], diff[-1], grid)
        )
        remainder = sum(
            cn * second_order_remainder(us, du, pn, self.params, grid)
            for cn, us, du, pn in zip(weights, star_states, diff, adj.p_series)
        )
        return float(quadratic - remainder)
