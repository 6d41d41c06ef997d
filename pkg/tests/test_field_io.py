import numpy as np
import pandas as pd
import pytest

from models.field import FieldSeries
from models.reports import CheckResult
from services.forward_solver_service import replay_segment, solve_forward
from utils.exceptions import CheckpointError, FieldFormatError
from utils.field_io import (
    HEADER,
    load_field,
    load_series,
    load_trajectory,
    save_field,
    save_series,
    save_trajectory,
    write_checks_csv,
    write_ledger_csv,
)


@pytest.fixture
def run(cubic_grid, params, make_field):
    return solve_forward(make_field(cubic_grid, 0), params, T=0.02, dt=0.005, checkpoint_stride=2)


def test_trajectory_file_keeps_checkpoints(tmp_path, run):
    traj, _ = run
    path = tmp_path / "trajectory.cbf"
    save_trajectory(path, traj)
    loaded = load_trajectory(path)
    assert loaded.grid == traj.grid
    assert loaded.dt == traj.dt
    assert loaded.n_steps == traj.n_steps
    assert loaded.checkpoint_stride == 2
    assert loaded.checkpoint_steps == traj.checkpoint_steps
    for step in traj.checkpoint_steps:
        assert np.array_equal(loaded.checkpoints[step], traj.checkpoints[step])
    # replay inputs are not stored
    with pytest.raises(CheckpointError):
        replay_segment(loaded, 0, 2)


def test_file_size_matches_header(tmp_path, run, cubic_grid):
    traj, _ = run
    path = tmp_path / "trajectory.cbf"
    save_trajectory(path, traj)
    count = len(traj.checkpoints)
    assert path.stat().st_size == HEADER.size + 4 * count + count * cubic_grid.n ** 2 * 2 * 16


def test_field_and_series_files(tmp_path, cubic_grid, make_field):
    u = make_field(cubic_grid, 1)
    save_field(tmp_path / "u.cbf", u)
    assert np.array_equal(load_field(tmp_path / "u.cbf").coeffs, u.coeffs)
    series = FieldSeries.constant(u, 3, 0.01)
    save_series(tmp_path / "s.cbf", series)
    loaded = load_series(tmp_path / "s.cbf")
    assert loaded.dt == 0.01 and np.array_equal(loaded.coeffs, series.coeffs)
    with pytest.raises(FieldFormatError):
        load_field(tmp_path / "s.cbf")


def test_corrupt_files_rejected(tmp_path, run):
    traj, _ = run
    path = tmp_path / "trajectory.cbf"
    save_trajectory(path, traj)
    raw = path.read_bytes()
    (tmp_path / "magic.cbf").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.cbf").write_bytes(raw[:-16])
    (tmp_path / "tiny.cbf").write_bytes(raw[:10])
    for name in ("magic.cbf", "short.cbf", "tiny.cbf"):
        with pytest.raises(FieldFormatError):
            load_trajectory(tmp_path / name)


def test_ledger_csv_is_reproducible(tmp_path, run, cubic_grid, params, make_field):
    _, ledger = run
    _, again = solve_forward(make_field(cubic_grid, 0), params, T=0.02, dt=0.005, checkpoint_stride=2)
    write_ledger_csv(tmp_path / "a.csv", ledger)
    write_ledger_csv(tmp_path / "b.csv", again)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    frame = pd.read_csv(tmp_path / "a.csv")
    assert tuple(frame.columns) == ledger.COLUMNS
    assert len(frame) == 5


def test_checks_csv(tmp_path):
    checks = [CheckResult("parseval", 0.0, 1e-12, True), CheckResult("poincare", -1.0, 0.0, False, "bad")]
    write_checks_csv(tmp_path / "checks.csv", checks)
    frame = pd.read_csv(tmp_path / "checks.csv")
    assert list(frame["name"]) == ["parseval", "poincare"]
    assert list(frame["passed"]) == [True, False]
