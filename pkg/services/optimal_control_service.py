import asyncio
import itertools
import time
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from kernels.spectral import dealias_project, gradient_samples, inverse_fft, quadrature, random_divfree_field
from models.costs import ControlProblem, OptimizerConfig
from models.field import FieldSeries, SpectralVecField
from models.reports import MultistartEntry, OptimReport, SecondOrderReport, SecondOrderSample
from models.trajectory import AdjointSpec, AdjointTrajectory, Trajectory
from services.adjoint_solver_service import solve_adjoint
from services.descent import minimize
from services.forward_solver_service import all_states, solve_forward
from utils.exceptions import CbfError, CheckpointError, ParameterError
from utils.helpers import trapezoid_weights
from utils.logger import get_logger

logger = get_logger(__name__)

# Independent optimizations run at most this many at a time
MAX_CONCURRENT_TASKS = 4


def weighted_dot(a, b, grid, weights):
    """sum_n c_n <a_n, b_n>_H for stacks of coefficient arrays."""
    prod = (a * np.conj(b)).real.sum(axis=(1, 2, 3))
    return float(grid.length ** 2 * np.dot(weights, prod))


def stack_norms(states, grid, weight=None):
    """||x_n||^2 for every entry of a stack (optionally |k|^2-weighted)."""
    sq = np.abs(states) ** 2
    if weight is not None:
        sq = sq * weight
    return grid.length ** 2 * sq.sum(axis=(1, 2, 3))


def second_order_remainder(u_star, u, p, params, grid):
    """
    <B(u, u), p> + beta <2 (u* . u) u + |u|^2 (u + u*), p> by grid quadrature;
    the beta term is the exact cubic remainder of C for r = 3 and vanishes for r = 1.
    """
    us, ws, ps = inverse_fft(u_star, grid), inverse_fft(u, grid), inverse_fft(p, grid)
    grad_w = gradient_samples(u, grid)
    advect = np.stack([ws[0] * grad_w[i, 0] + ws[1] * grad_w[i, 1] for i in range(2)])
    total = quadrature((advect * ps).sum(axis=0), grid)
    if params.beta and params.r == 3:
        dot_uw = us[0] * ws[0] + us[1] * ws[1]
        mag2 = ws[0] ** 2 + ws[1] ** 2
        cubic = 2.0 * dot_uw * ws + mag2 * (ws + us)
        total += params.beta * quadrature((cubic * ps).sum(axis=0), grid)
    return total


def check_second_order_exponent(params):
    if params.r not in (1, 3):
        raise ParameterError(f"the second-order form is only available for r = 1 or r = 3, got r = {params.r}")


class OptimalControlService:
    """
    Distributed optimal control of the damped Navier-Stokes state.

    Controls are stacks U_n at the N+1 time nodes; gradients are Riesz
    representatives in the trapezoid-weighted L^2(0, T; H) inner product.
    """

    def __init__(self, problem: ControlProblem, opt_cfg: Optional[OptimizerConfig] = None):
        """
        Initialize the service.

        Args:
            problem: state data, horizon and cost
            opt_cfg: optimizer settings (defaults when omitted)
        """
        self.problem = problem
        self.cost = problem.cost
        self.params = problem.params
        self.grid = problem.grid
        self.opt_cfg = opt_cfg or OptimizerConfig()
        self.weights = trapezoid_weights(problem.n_steps, problem.dt)
        self.target = self.cost.target_coeffs(problem.n_steps, problem.dt)
        self.terminal_target = self.cost.terminal_coeffs()

    # -- plumbing ---------------------------------------------------------

    def dot(self, a, b):
        return weighted_dot(a, b, self.grid, self.weights)

    def _series(self, coeffs):
        return FieldSeries(self.grid, self.problem.dt, coeffs)

    def _coeffs(self, controls):
        if controls is None:
            return np.zeros((self.problem.n_steps + 1, 2, self.grid.n, self.grid.n), dtype=complex)
        coeffs = controls.coeffs if isinstance(controls, FieldSeries) else controls
        return dealias_project(np.asarray(coeffs), self.grid)

    def solve_state(self, controls=None) -> Tuple[Trajectory, np.ndarray]:
        """Forward run for ``controls``; returns the trajectory and all its states."""
        p = self.problem
        traj, _ = solve_forward(p.u0, p.params, self.cost.control_op, self._series(self._coeffs(controls)),
                                p.forcing, p.T, p.dt)
        return traj, all_states(traj)

    def cost_from_states(self, states, control_coeffs):
        c = self.cost
        track = np.dot(self.weights, stack_norms(states - self.target, self.grid))
        enstrophy = np.dot(self.weights, stack_norms(states, self.grid, self.grid.k2))
        control = np.dot(self.weights, stack_norms(control_coeffs, self.grid))
        terminal = stack_norms((states[-1] - self.terminal_target)[None], self.grid)[0]
        return float(c.w_track * track + c.w_enstrophy * enstrophy + c.w_control * control + c.w_terminal * terminal)

    def adjoint_spec(self, states) -> AdjointSpec:
        """h = 2 w_track (u - u_d) + 2 w_enstrophy A u,  p_T = 2 w_terminal (u(T) - u_f)."""
        c = self.cost
        rhs = 2 * c.w_track * (states - self.target) + 2 * c.w_enstrophy * self.grid.k2 * states
        terminal = 2 * c.w_terminal * (states[-1] - self.terminal_target)
        return AdjointSpec(SpectralVecField(self.grid, terminal), self._series(rhs))

    # -- cost and gradient ----------------------------------------------------

    def evaluate_cost(self, traj: Trajectory, controls=None) -> float:
        """Cost of a computed trajectory and the controls that produced it."""
        if traj.grid != self.grid or traj.n_steps != self.problem.n_steps:
            raise CbfError("trajectory does not belong to this control problem")
        return self.cost_from_states(all_states(traj), self._coeffs(controls))

    def cost_and_gradient(self, control_coeffs) -> Tuple[float, np.ndarray, AdjointTrajectory]:
        control_coeffs = self._coeffs(control_coeffs)
        traj, states = self.solve_state(control_coeffs)
        adj = solve_adjoint(traj, self.params, self.adjoint_spec(states))
        grad = 2 * self.cost.w_control * control_coeffs + self.cost.control_op.adjoint_coeffs(adj.p_series)
        return self.cost_from_states(states, control_coeffs), grad, adj

    def gradient_distributed(self, controls=None) -> FieldSeries:
        """2 w_control U + D* p at every node."""
        try:
            _, grad, _ = self.cost_and_gradient(controls)
        except CbfError as e:
            logger.error(f"Gradient evaluation failed: {str(e)}")
            raise
        return self._series(grad)

    def directional_derivative(self, controls, direction) -> float:
        return self.dot(self.gradient_distributed(controls).coeffs, self._coeffs(direction))

    def pontryagin_residual(self, controls, p) -> float:
        """
        int [h(U) + <p, D U> - min_W (h(W) + <p, D W>)] dt = int w_control ||U + D* p / (2 w_control)||^2 dt.
        """
        w = self.cost.w_control
        p_coeffs = p.coeffs if isinstance(p, FieldSeries) else p
        gap = self._coeffs(controls) + self.cost.control_op.adjoint_coeffs(p_coeffs) / (2 * w)
        return w * self.dot(gap, gap)

    # -- optimization -----------------------------------------------------------

    def optimize(self, initial=None) -> Tuple[FieldSeries, OptimReport]:
        """
        Minimize the cost over distributed controls.

        Args:
            initial: starting controls (zero by default)

        Returns:
            Optimal controls and the optimizer report
        """
        start_time = time.perf_counter()
        logger.info(f"Optimal control: {self.grid.describe()}, T={self.problem.T:g}, method={self.opt_cfg.method.value}")

        def objective(x):
            cost, grad, _ = self.cost_and_gradient(x)
            return cost, grad

        w = self.cost.w_control
        try:
            x, report = minimize(objective, self._coeffs(initial), self.dot, self.opt_cfg,
                                 residual=lambda g: self.dot(g, g) / (4 * w))
        except CbfError as e:
            logger.error(f"Optimal control failed: {str(e)}")
            raise
        logger.info(f"Optimal control finished in {time.perf_counter() - start_time:.2f}s, J = {report.final_cost:.6e}")
        return self._series(x), report

    # -- second-order conditions --------------------------------------------

    def second_order_form(self, u_star_traj: Trajectory, p: np.ndarray, perturb_U, base_controls=None) -> float:
        """
        Q(dU) = w_track int ||u||^2 + w_enstrophy int ||u||_V^2 + w_control int ||dU||^2
                + w_terminal ||u(T)||^2 - int <B(u, u), p> - beta int <2 (u*.u) u + |u|^2 (u + u*), p>,

        with u = z - u* the state difference caused by the perturbation.

        Args:
            u_star_traj: state trajectory at the candidate optimum
            p: adjoint states at the time nodes
            perturb_U: control perturbation dU
            base_controls: controls that produced ``u_star_traj``; required when
                the trajectory was loaded from disk and carries no replay inputs

        Returns:
            Q(dU)
        """
        check_second_order_exponent(self.params)
        if u_star_traj.grid != self.grid or u_star_traj.n_steps != self.problem.n_steps:
            raise CbfError("trajectory does not belong to this control problem")
        if base_controls is None:
            if u_star_traj.inputs is None:
                raise CheckpointError("trajectory carries no controls (loaded from disk?); pass base_controls")
            base_controls = u_star_traj.inputs.controls
        base = self._coeffs(base_controls)
        p = p.coeffs if isinstance(p, FieldSeries) else p
        if u_star_traj.is_complete() or u_star_traj.inputs is not None:
            star_states = all_states(u_star_traj)
        else:
            _, star_states = self.solve_state(base)
        delta = self._coeffs(perturb_U)
        _, states = self.solve_state(base + delta)
        diff = states - star_states
        c = self.cost
        quadratic = (
            c.w_track * np.dot(self.weights, stack_norms(diff, self.grid))
            + c.w_enstrophy * np.dot(self.weights, stack_norms(diff, self.grid, self.grid.k2))
            + c.w_control * np.dot(self.weights, stack_norms(delta, self.grid))
            + c.w_terminal * stack_norms(diff[-1:], self.grid)[0]
        )
        remainder = sum(
            cn * second_order_remainder(us, du, pn, self.params, self.grid)
            for cn, us, du, pn in zip(self.weights, star_states, diff, p)
        )
        return float(quadratic - remainder)

    def second_order_report(self, controls, n_samples=20, seed=0, scale=1e-2, tolerance=1e-8) -> SecondOrderReport:
        """
        Sample perturbations around ``controls`` and record Q, the exact cost
        increment and the first-order term for each.
        """
        check_second_order_exponent(self.params)
        coeffs = self._coeffs(controls)
        traj, states = self.solve_state(coeffs)
        cost, grad, adj = self.cost_and_gradient(coeffs)
        p = adj.p_series
        samples: List[SecondOrderSample] = []
        for i in range(n_samples):
            field = random_divfree_field(self.grid, seed + i, norm_h=scale)
            profile = np.cos(np.pi * (i % 3) * np.arange(self.problem.n_steps + 1) / max(self.problem.n_steps, 1))
            delta = profile[:, None, None, None] * field.coeffs[None]
            Q = self.second_order_form(traj, p, delta)
            _, perturbed = self.solve_state(coeffs + delta)
            increment = self.cost_from_states(perturbed, coeffs + delta) - cost
            samples.append(SecondOrderSample(np.sqrt(self.dot(delta, delta)), Q, increment, self.dot(grad, delta)))
        residual = self.pontryagin_residual(coeffs, p)
        report = SecondOrderReport(samples, residual, tolerance)
        logger.info(f"Second-order report: min Q = {report.min_Q:.3e}, Pontryagin residual = {residual:.3e}, "
                    f"locally optimal = {report.locally_optimal}")
        return report


# ---------------------------------------------------------------------------
# Multistart uniqueness experiment
# ---------------------------------------------------------------------------

async def _execute_tasks_with_limited_concurrency(jobs: List[Callable[[], object]]) -> List[object]:
    """Run blocking jobs in worker threads, MAX_CONCURRENT_TASKS at a time, keeping submission order."""
    results = []
    for i in range(0, len(jobs), MAX_CONCURRENT_TASKS):
        batch = jobs[i:i + MAX_CONCURRENT_TASKS]
        batch_results = await asyncio.gather(*(asyncio.to_thread(job) for job in batch), return_exceptions=True)
        for j, result in enumerate(batch_results):
            if isinstance(result, Exception):
                logger.error(f"Task {i + j} failed: {str(result)}")
                raise result
            results.append(result)
    return results


def random_start(grid, n_steps, dt, seed, amplitude):
    field = random_divfree_field(grid, seed, norm_h=amplitude)
    return FieldSeries.constant(field, n_steps, dt)


async def _multistart(problem_factory, T_list, n_starts, seed, amplitude, opt_cfg):
    entries = []
    for T in T_list:
        service = OptimalControlService(problem_factory(T), opt_cfg)
        p = service.problem
        starts = [random_start(p.grid, p.n_steps, p.dt, seed + i, amplitude) for i in range(n_starts)]
        jobs = [lambda start=start: service.optimize(start) for start in starts]
        results = await _execute_tasks_with_limited_concurrency(jobs)
        optima = [u.coeffs for u, _ in results]
        distance = max(
            (np.sqrt(service.dot(a - b, a - b)) for a, b in itertools.combinations(optima, 2)),
            default=0.0,
        )
        norm = float(np.sqrt(service.dot(optima[0], optima[0])))
        entry = MultistartEntry(T, n_starts, float(distance), norm, [r.final_cost for _, r in results])
        logger.info(f"Multistart T={T:g}: {n_starts} starts, max distance {distance:.3e} (|U*| = {norm:.3e})")
        entries.append(entry)
    return entries


def multistart_uniqueness(
    problem_factory: Callable[[float], ControlProblem],
    T_list: Sequence[float],
    n_starts: int = 4,
    seed: int = 0,
    amplitude: float = 1.0,
    opt_cfg: Optional[OptimizerConfig] = None,
) -> List[MultistartEntry]:
    """
    Optimize from ``n_starts`` random initial controls for each horizon and
    report how far apart the optima end up.

    Args:
        problem_factory: builds the control problem for a horizon T
        T_list: increasing horizons
        n_starts: random starts per horizon
        seed: seed of the first start (start i uses seed + i)
        amplitude: H-norm of the random starting controls
        opt_cfg: optimizer settings
    """
    T_list = list(T_list)
    if any(a >= b for a, b in zip(T_list, T_list[1:])):
        raise ParameterError("horizons must be strictly increasing")
    if n_starts < 1:
        raise ParameterError("n_starts must be >= 1")
    return asyncio.run(_multistart(problem_factory, T_list, n_starts, seed, amplitude, opt_cfg))
