import numpy as np
import pytest

from models.control import ControlOperatorD
from models.field import FieldSeries
from models.params import CbfParams
from models.trajectory import AdjointSpec
from services.adjoint_solver_service import (
    adjoint_energy_bound_check,
    continuous_adjoint_residual,
    duality_check,
    solve_adjoint,
)
from services.forward_solver_service import solve_forward
from utils.exceptions import GridMismatchError


def _spec(grid, n_steps, dt, make_field):
    return AdjointSpec(make_field(grid, 20), FieldSeries.constant(make_field(grid, 21), n_steps, dt))


@pytest.mark.parametrize("stride", [1, 3])
def test_discrete_duality(stride, params, cubic_grid, make_field):
    traj, _ = solve_forward(make_field(cubic_grid, 0), params, T=0.05, dt=0.005, checkpoint_stride=stride)
    g = FieldSeries.constant(make_field(cubic_grid, 1), traj.n_steps, traj.dt)
    spec = _spec(cubic_grid, traj.n_steps, traj.dt, make_field)
    assert duality_check(traj, params, make_field(cubic_grid, 2), g, spec) < 1e-11


def _control_op(grid, kind):
    if kind == "low_pass":
        return ControlOperatorD.low_pass(grid, 2)
    if kind == "box":
        return ControlOperatorD.box(grid, (0.0, np.pi), (0.5, 4.0))
    return ControlOperatorD.identity(grid)


@pytest.mark.parametrize("control", ["identity", "low_pass", "box"])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_discrete_duality_for_each_exponent_and_control(r, control, cubic_grid, make_field):
    params = CbfParams(mu=0.1, alpha=0.1, beta=1.0, r=r)
    control_op = _control_op(cubic_grid, control)
    n_steps, dt = 10, 0.005
    controls = FieldSeries.constant(make_field(cubic_grid, 5, norm=0.5), n_steps, dt)
    traj, _ = solve_forward(make_field(cubic_grid, 0), params, control_op, controls, T=0.05, dt=dt,
                            checkpoint_stride=4)
    for seed in (10, 20, 30):
        direction = FieldSeries.constant(make_field(cubic_grid, seed), n_steps, dt)
        g = FieldSeries(cubic_grid, dt, control_op.apply_coeffs(direction.coeffs))
        spec = AdjointSpec(make_field(cubic_grid, seed + 1), FieldSeries.constant(make_field(cubic_grid, seed + 2), n_steps, dt))
        assert duality_check(traj, params, make_field(cubic_grid, seed + 3), g, spec) < 1e-11


def test_adjoint_is_stored_backward(params, cubic_grid, make_field):
    traj, _ = solve_forward(make_field(cubic_grid, 0), params, T=0.02, dt=0.005)
    adj = solve_adjoint(traj, params, _spec(cubic_grid, traj.n_steps, traj.dt, make_field))
    assert adj.direction == "backward"
    assert adj.is_complete()
    assert adj.p_series.shape == (traj.n_steps + 1, 2, cubic_grid.n, cubic_grid.n)


def test_adjoint_energy_bound(params, cubic_grid, make_field):
    traj, _ = solve_forward(make_field(cubic_grid, 3), params, T=0.05, dt=0.005)
    spec = _spec(cubic_grid, traj.n_steps, traj.dt, make_field)
    assert adjoint_energy_bound_check(traj, params, spec) >= 0


def test_discrete_adjoint_approaches_continuous_one(params, cubic_grid, make_field):
    u0 = make_field(cubic_grid, 4)
    residuals = []
    for dt in (0.01, 0.005):
        traj, _ = solve_forward(u0, params, T=0.1, dt=dt)
        residuals.append(continuous_adjoint_residual(traj, params, _spec(cubic_grid, traj.n_steps, dt, make_field)))
    assert residuals[1] < 0.8 * residuals[0]


def test_terminal_on_wrong_grid(params, grid, cubic_grid, make_field):
    traj, _ = solve_forward(make_field(cubic_grid, 0), params, T=0.01, dt=0.005)
    spec = AdjointSpec(make_field(grid, 0), FieldSeries.zeros(cubic_grid, traj.n_steps, traj.dt))
    with pytest.raises(GridMismatchError):
        solve_adjoint(traj, params, spec)
