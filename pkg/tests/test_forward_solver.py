import numpy as np
import pytest

from kernels import spectral as sp
from models.control import ControlOperatorD, ForcingSpec
from models.field import FieldSeries
from models.params import CbfParams
from services.forward_solver_service import (
    all_states,
    apriori_bound_check,
    energy_equality_residual,
    replay,
    solve_forward,
    suggest_dt,
)
from utils.exceptions import AlignmentError, BlowupError, CheckpointError, GridMismatchError
from utils.helpers import loglog_slope


DT_SWEEP = (0.02, 0.01, 0.005)


def _shear_decay_error(grid, params, dt, T=0.2):
    u0 = sp.shear_mode(grid)
    traj, _ = solve_forward(u0, params, T=T, dt=dt)
    exact = np.exp(-(params.mu + params.alpha + params.beta) * T) * u0.coeffs
    return np.max(np.abs(traj.final_state.coeffs - exact)) / np.max(np.abs(exact))


def test_undamped_shear_mode_decays_exactly(grid):
    # beta = 0: only the integrating factor acts
    params = CbfParams(mu=0.1, alpha=0.2, beta=0.0, r=1)
    for dt in DT_SWEEP:
        assert _shear_decay_error(grid, params, dt) <= 1e-13


def test_shear_decay_error_is_second_order(grid):
    params = CbfParams(mu=0.1, alpha=0.2, beta=0.5, r=1)
    errors = [_shear_decay_error(grid, params, dt) for dt in DT_SWEEP]
    assert 1.8 <= loglog_slope(DT_SWEEP, errors) <= 2.2
    assert errors[-1] <= 1e-5


def test_unforced_energy_balance(cubic_grid, params, make_field):
    traj, ledger = solve_forward(make_field(cubic_grid, 0), params, T=0.05, dt=0.005)
    assert energy_equality_residual(traj, ledger) < 1e-3
    assert np.all(np.diff(ledger.kinetic) < 0)
    assert ledger.work_f.max() == 0.0 and ledger.work_DU.max() == 0.0


def test_energy_residual_is_second_order(cubic_grid, params, make_field):
    u0 = make_field(cubic_grid, 1)
    residuals = [energy_equality_residual(*solve_forward(u0, params, T=0.2, dt=dt)) for dt in DT_SWEEP]
    assert 1.8 <= loglog_slope(DT_SWEEP, residuals) <= 2.2


def test_forced_controlled_run_respects_apriori_bound(cubic_grid, params, make_field):
    n_steps, dt = 10, 0.005
    controls = FieldSeries.constant(make_field(cubic_grid, 2, norm=0.5), n_steps, dt)
    forcing = ForcingSpec(make_field(cubic_grid, 3, norm=0.5))
    control_op = ControlOperatorD.low_pass(cubic_grid, 2)
    traj, ledger = solve_forward(make_field(cubic_grid, 4), params, control_op, controls, forcing, T=0.05, dt=dt)
    assert apriori_bound_check(traj, ledger) >= 0
    assert ledger.bound_K_T > ledger.kinetic[0]
    assert energy_equality_residual(traj, ledger) < 1e-3


def test_checkpoints_and_bitwise_replay(cubic_grid, params, make_field):
    u0 = make_field(cubic_grid, 5)
    full, _ = solve_forward(u0, params, T=0.05, dt=0.005, checkpoint_stride=1)
    sparse, _ = solve_forward(u0, params, T=0.05, dt=0.005, checkpoint_stride=3)
    assert sparse.checkpoint_steps == [0, 3, 6, 9, 10]
    assert np.array_equal(replay(sparse, 4).coeffs, full.checkpoints[4])
    assert np.array_equal(all_states(sparse), all_states(full))
    with pytest.raises(CheckpointError):
        sparse.state(4)


def test_replay_detects_tampered_checkpoint(cubic_grid, params, make_field):
    traj, _ = solve_forward(make_field(cubic_grid, 6), params, T=0.02, dt=0.005, checkpoint_stride=2)
    traj.checkpoints[2] = traj.checkpoints[2] * (1 + 1e-9)
    with pytest.raises(CheckpointError):
        all_states(traj)


def test_deterministic_runs(cubic_grid, params, make_field):
    u0 = make_field(cubic_grid, 7)
    first, _ = solve_forward(u0, params, T=0.02, dt=0.005)
    second, _ = solve_forward(u0, params, T=0.02, dt=0.005)
    assert np.array_equal(first.final_state.coeffs, second.final_state.coeffs)


def test_horizon_must_be_multiple_of_step(cubic_grid, params, make_field):
    with pytest.raises(AlignmentError):
        solve_forward(make_field(cubic_grid, 0), params, T=0.05, dt=0.003)


def test_misaligned_controls(cubic_grid, grid, params, make_field):
    u0 = make_field(cubic_grid, 0)
    with pytest.raises(AlignmentError):
        solve_forward(u0, params, controls=FieldSeries.zeros(cubic_grid, 4, 0.005), T=0.05, dt=0.005)
    with pytest.raises(GridMismatchError):
        solve_forward(u0, params, controls=FieldSeries.zeros(grid, 10, 0.005), T=0.05, dt=0.005)


def test_blowup_reports_step(cubic_grid, params, make_field):
    with pytest.raises(BlowupError) as err:
        solve_forward(make_field(cubic_grid, 0, norm=1e13), params, T=0.01, dt=0.005)
    assert err.value.step == 0


def test_suggest_dt(cubic_grid, make_field):
    u0 = make_field(cubic_grid, 0)
    speed = np.max(np.abs(sp.to_physical(u0).samples))
    assert suggest_dt(u0) == pytest.approx(0.5 * cubic_grid.dx / speed)
    assert suggest_dt(sp.SpectralVecField.zeros(cubic_grid)) == pytest.approx(cubic_grid.dx)
