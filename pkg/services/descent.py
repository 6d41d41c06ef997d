"""
Armijo-backtracked first-order minimizers over ndarray controls.

The objective returns (cost, gradient) where the gradient is the Riesz
representative in the inner product ``dot``; every method works in that
inner product, so weighted control spaces need no special casing.
"""
from collections import deque
from typing import Callable, Tuple

import numpy as np

from models.costs import OptimizerConfig, OptimMethod
from models.reports import OptimReport, Termination
from utils.logger import get_logger

logger = get_logger(__name__)


def armijo_search(objective, x, cost, grad, direction, dot, cfg, step):
    """
    Backtrack from ``step`` until J(x + s d) <= J(x) + c1 s <g, d>.

    Returns (step, x_new, cost_new, grad_new), or None after max_backtracks.
    """
    slope = dot(grad, direction)
    for _ in range(cfg.max_backtracks):
        candidate = x + step * direction
        new_cost, new_grad = objective(candidate)
        if np.isfinite(new_cost) and new_cost <= cost + cfg.c1 * step * slope:
            return step, candidate, new_cost, new_grad
        step *= cfg.rho
    return None


def _lbfgs_direction(grad, pairs, dot):
    """Two-loop recursion for -H g with the stored (s, y, 1/<y, s>) pairs."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * dot(s, q)
        alphas.append(a)
        q = q - a * y
    if pairs:
        s, y, _ = pairs[-1]
        q = q * (dot(s, y) / dot(y, y))
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * dot(y, q)
        q = q + (a - b) * s
    return -q


def minimize(
    objective: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0: np.ndarray,
    dot: Callable[[np.ndarray, np.ndarray], float],
    cfg: OptimizerConfig,
    residual: Callable[[np.ndarray], float] = lambda g: 0.0,
):
    """
    Minimize ``objective`` from ``x0``.

    Args:
        objective: maps x to (cost, gradient)
        x0: starting point
        dot: inner product the gradient is taken in
        cfg: optimizer settings
        residual: stationarity residual recorded with every iterate

    Returns:
        (x, OptimReport)
    """
    report = OptimReport()
    x = np.array(x0, dtype=complex)
    cost, grad = objective(x)
    g_norm = np.sqrt(max(dot(grad, grad), 0.0))
    report.record(cost, g_norm, 0.0, residual(grad))
    tolerance = max(cfg.grad_tol * g_norm, cfg.grad_atol)
    logger.info(f"Optimizer {cfg.method.value}: J0 = {cost:.6e}, |g0| = {g_norm:.3e}")

    pairs = deque(maxlen=cfg.memory)
    direction = -grad
    termination = Termination.MAX_ITERS
    if g_norm <= tolerance:
        return x, report.finish(Termination.CONVERGED)

    for it in range(1, cfg.max_iters + 1):
        if dot(grad, direction) >= 0:
            direction = -grad
            pairs.clear()
        found = armijo_search(objective, x, cost, grad, direction, dot, cfg, cfg.initial_step)
        if found is None:
            logger.warning(f"Line search failed at iteration {it} after {cfg.max_backtracks} backtracks")
            termination = Termination.LINE_SEARCH_FAILED
            break
        step, x_new, cost_new, grad_new = found

        if cfg.method is OptimMethod.LBFGS:
            s, y = x_new - x, grad_new - grad
            sy = dot(s, y)
            if sy > 1e-12 * np.sqrt(dot(s, s) * dot(y, y)):
                pairs.append((s, y, 1.0 / sy))
            next_direction = _lbfgs_direction(grad_new, list(pairs), dot)
        elif cfg.method is OptimMethod.NONLINEAR_CG:
            beta = max(0.0, dot(grad_new, grad_new - grad) / dot(grad, grad))
            next_direction = -grad_new + beta * direction
        else:
            next_direction = -grad_new

        x, cost, grad, direction = x_new, cost_new, grad_new, next_direction
        g_norm = np.sqrt(max(dot(grad, grad), 0.0))
        report.record(cost, g_norm, step, residual(grad))
        logger.info(f"iter {it}: J = {cost:.6e}, |g| = {g_norm:.3e}, step = {step:.3e}")
        if g_norm <= tolerance:
            termination = Termination.CONVERGED
            break

    report.finish(termination)
    logger.info(f"Optimizer stopped ({termination.value}) after {report.iterations} iterations, J = {cost:.6e}")
    return x, report
