import os
from typing import List

import numpy as np
import pandas as pd

from kernels import spectral as sp
from models.control import ControlOperatorD, ForcingSpec
from models.costs import ControlProblem, CostConfig
from models.field import FieldSeries
from models.reports import CheckResult
from models.run_config import RunConfig
from services.assimilation_service import AssimilationService
from services.forward_solver_service import all_states, energy_equality_residual, solve_forward
from services.optimal_control_service import OptimalControlService
from services.verification_service import VerificationService
from utils.field_io import save_field, save_series, save_trajectory, write_checks_csv, write_ledger_csv, write_report_csv
from utils.logger import get_logger

logger = get_logger(__name__)


class RunService:
    """Builds the run objects described by a RunConfig and executes one subcommand."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.grid = cfg.grid()
        self.params = cfg.params()
        self.out_dir = cfg.output_dir
        self.n_steps = round(cfg.T / cfg.dt)

    # -- builders -----------------------------------------------------------------

    def forcing(self) -> ForcingSpec:
        f = self.cfg["forcing"]
        if f["kind"] == "zero" or not f["amplitude"]:
            return ForcingSpec.zero()
        if f["kind"] == "shear":
            return ForcingSpec(sp.shear_mode(self.grid, float(f["amplitude"])))
        return ForcingSpec(sp.random_divfree_field(self.grid, int(f["seed"]), norm_h=float(f["amplitude"])))

    def control_op(self) -> ControlOperatorD:
        c = self.cfg["control"]
        if c["kind"] == "low_pass":
            return ControlOperatorD.low_pass(self.grid, float(c["radius"]))
        if c["kind"] == "box":
            return ControlOperatorD.box(self.grid, c["x_range"], c["y_range"])
        return ControlOperatorD.identity(self.grid)

    def initial_field(self):
        run = self.cfg["run"]
        if run["initial"] == "zero":
            return sp.SpectralVecField.zeros(self.grid)
        if run["initial"] == "decay_mode":
            return sp.shear_mode(self.grid, float(run["amplitude"]))
        return sp.random_divfree_field(self.grid, self.cfg.seed, float(run["decay_exponent"]), float(run["amplitude"]))

    def control_problem(self) -> ControlProblem:
        c = self.cfg["cost"]
        u0, forcing, control_op = self.initial_field(), self.forcing(), self.control_op()
        target = None
        if c["target"] == "shear":
            target = FieldSeries.constant(sp.shear_mode(self.grid, float(c["target_amplitude"])), self.n_steps, self.cfg.dt)
        elif c["target"] == "reference":
            # reachable reference: the state driven by a fixed random control
            reference = FieldSeries.constant(
                sp.random_divfree_field(self.grid, self.cfg.seed + 1, norm_h=float(c["target_amplitude"])),
                self.n_steps, self.cfg.dt,
            )
            traj, _ = solve_forward(u0, self.params, control_op, reference, forcing, self.cfg.T, self.cfg.dt)
            target = FieldSeries(self.grid, self.cfg.dt, all_states(traj))
        cost = CostConfig(
            control_op,
            target,
            target.at(self.n_steps) if target is not None else None,
            w_track=float(c["w_track"]),
            w_enstrophy=float(c["w_enstrophy"]),
            w_control=float(c["w_control"]),
            w_terminal=float(c["w_terminal"]),
        )
        return ControlProblem(self.params, u0, cost, self.cfg.T, self.cfg.dt, forcing)

    def _path(self, name):
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, name)

    # -- subcommands --------------------------------------------------------------

    def simulate(self) -> bool:
        traj, ledger = solve_forward(
            self.initial_field(), self.params, forcing=self.forcing(), T=self.cfg.T, dt=self.cfg.dt,
            checkpoint_stride=int(self.cfg["run"]["checkpoint_stride"]),
        )
        save_trajectory(self._path("trajectory.cbf"), traj)
        write_ledger_csv(self._path("ledger.csv"), ledger)
        logger.info(f"Energy equality residual {energy_equality_residual(traj, ledger):.3e}")
        return bool(np.all(np.isfinite(ledger.equality_residual)))

    def optimize(self) -> bool:
        service = OptimalControlService(self.control_problem(), self.cfg.optimizer())
        controls, report = service.optimize()
        write_report_csv(self._path("report.csv"), report)
        save_series(self._path("controls.cbf"), controls)
        logger.info(f"Optimizer stopped: {report.termination.value} after {report.iterations} iterations")
        return True

    def assimilate(self) -> bool:
        a = self.cfg["assimilation"]
        service = AssimilationService(self.params, self.forcing(), self.cfg.optimizer())
        data = service.generate_twin_data(
            self.initial_field(), self.cfg.T, self.cfg.dt, float(a["noise_level"]), self.cfg.seed,
            w_track=float(a["w_track"]), w_enstrophy=float(a["w_enstrophy"]),
            w_init=float(a["w_init"]), w_terminal=float(a["w_terminal"]),
        )
        estimate, report = service.assimilate(data)
        write_report_csv(self._path("report.csv"), report)
        save_field(self._path("initial_estimate.cbf"), estimate)
        logger.info(f"Optimizer stopped: {report.termination.value} after {report.iterations} iterations")
        return True

    def verify(self) -> bool:
        v = self.cfg["verify"]
        checks: List[CheckResult] = VerificationService(self.params, int(v["n"]), int(v["samples"]), self.cfg.seed).run()
        write_checks_csv(self._path("checks.csv"), checks)
        table = pd.DataFrame({
            "check": [c.name for c in checks],
            "margin": [f"{c.margin:.3e}" for c in checks],
            "tolerance": [f"{c.tolerance:.1e}" for c in checks],
            "result": ["pass" if c.passed else "FAIL" for c in checks],
        })
        print(table.to_string(index=False))
        print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
        return all(c.passed for c in checks)
