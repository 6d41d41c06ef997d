import numpy as np


def trapezoid_weights(n_steps, dt):
    """Composite trapezoid weights c_0..c_N on a uniform grid."""
    weights = np.full(n_steps + 1, float(dt))
    weights[0] = weights[-1] = 0.5 * dt
    if n_steps == 0:
        weights[0] = 0.0
    return weights


def loglog_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs); zero entries are dropped."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = (xs > 0) & (ys > 0)
    if keep.sum() < 2:
        return float('nan')
    slope, _ = np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)
    return float(slope)


def step_count(T, dt):
    """Number of uniform steps covering [0, T], or None when T/dt is not an integer."""
    if dt <= 0 or T < 0:
        return None
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(T, dt):
        return None
    return n
