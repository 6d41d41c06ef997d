"""
Binary field files and CSV outputs.

A field file starts with a little-endian header

    magic "CBF1" | version u32 | n u32 | length f64 | count u32 | dt f64 | flags u32 | n_steps u32 | stride u32

followed by ``count`` u32 step indices and ``count`` spectral fields stored
as complex128 pairs (count * n * n * 2 components * 16 bytes).
"""
import os
import struct

import numpy as np
import pandas as pd

from models.field import FieldSeries, SpectralVecField
from models.grid import DealiasRule, GridSpec
from models.trajectory import Trajectory
from utils.exceptions import FieldFormatError
from utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"CBF1"
VERSION = 1
HEADER = struct.Struct("<4sIIdIdIII")

FLAG_SPECTRAL = 1
FLAG_ONE_HALF = 2

# Fixed so identical runs produce identical bytes
CSV_FLOAT_FORMAT = "%.12e"


def _write(path, grid, dt, n_steps, stride, steps, arrays):
    flags = FLAG_SPECTRAL | (FLAG_ONE_HALF if grid.dealias_rule is DealiasRule.ONE_HALF else 0)
    header = HEADER.pack(MAGIC, VERSION, grid.n, float(grid.length), len(steps), float(dt), flags, n_steps, stride)
    payload = np.ascontiguousarray(np.stack(arrays), dtype="<c16")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(steps, dtype="<u4").tobytes())
        fh.write(payload.tobytes())
    logger.debug(f"Wrote {len(steps)} fields to {path}")


def _read(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise FieldFormatError(f"{path}: file shorter than the header")
    magic, version, n, length, count, dt, flags, n_steps, stride = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}")
    if not flags & FLAG_SPECTRAL:
        raise FieldFormatError(f"{path}: only spectral payloads are supported")
    index_end = HEADER.size + 4 * count
    expected = index_end + count * n * n * 2 * 16
    if len(raw) != expected:
        raise FieldFormatError(f"{path}: payload has {len(raw)} bytes, expected {expected}")
    rule = DealiasRule.ONE_HALF if flags & FLAG_ONE_HALF else DealiasRule.TWO_THIRDS
    grid = GridSpec(n=n, length=length, dealias_rule=rule)
    steps = np.frombuffer(raw, dtype="<u4", count=count, offset=HEADER.size).astype(int)
    data = np.frombuffer(raw, dtype="<c16", offset=index_end).reshape(count, 2, n, n)
    return grid, dt, n_steps, stride, steps, data.astype(complex)


def save_trajectory(path, traj: Trajectory):
    """Write the stored states of ``traj``; replay inputs are not persisted."""
    steps = traj.checkpoint_steps
    _write(path, traj.grid, traj.dt, traj.n_steps, traj.checkpoint_stride, steps,
           [traj.checkpoints[s] for s in steps])


def load_trajectory(path) -> Trajectory:
    grid, dt, n_steps, stride, steps, data = _read(path)
    traj = Trajectory(grid, dt, n_steps, stride)
    for step, coeffs in zip(steps, data):
        traj.checkpoints[int(step)] = coeffs
    return traj


def save_field(path, field: SpectralVecField):
    _write(path, field.grid, 0.0, 0, 1, [0], [field.coeffs])


def load_field(path) -> SpectralVecField:
    grid, _, _, _, _, data = _read(path)
    if len(data) != 1:
        raise FieldFormatError(f"{path}: expected a single field, found {len(data)}")
    return SpectralVecField(grid, data[0])


def save_series(path, series: FieldSeries):
    _write(path, series.grid, series.dt, series.n_steps, 1, list(range(len(series))), list(series.coeffs))


def load_series(path) -> FieldSeries:
    grid, dt, _, _, _, data = _read(path)
    return FieldSeries(grid, dt, data)


def write_csv(path, columns):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    pd.DataFrame(columns).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info(f"Wrote {path}")


def write_ledger_csv(path, ledger):
    write_csv(path, ledger.as_columns())


def write_report_csv(path, report):
    write_csv(path, report.as_columns())


def write_checks_csv(path, checks):
    write_csv(path, {
        "name": [c.name for c in checks],
        "margin": [c.margin for c in checks],
        "tolerance": [c.tolerance for c in checks],
        "passed": [c.passed for c in checks],
        "detail": [c.detail for c in checks],
    })
