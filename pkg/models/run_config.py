"""
Declarative run document (YAML).

Every section is optional; missing keys fall back to DEFAULTS. Validation
collects every problem it finds and raises one ConfigError listing them.
"""
import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
import yaml

from config import CBF_CHECKPOINT_STRIDE, CBF_DEFAULT_SEED
from models.costs import OptimizerConfig, OptimMethod
from models.grid import DealiasRule, GridSpec
from models.params import CbfParams
from utils.exceptions import CbfError, ConfigError
from utils.helpers import step_count

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "grid": {"n": 32, "length": float(2 * np.pi), "dealias": "auto"},
    "params": {"mu": 0.1, "alpha": 0.1, "beta": 5.0, "r": 3},
    "forcing": {"kind": "zero", "amplitude": 0.0, "seed": 1},
    "control": {"kind": "identity", "radius": 4.0, "x_range": [0.0, float(np.pi)], "y_range": [0.0, float(2 * np.pi)]},
    "cost": {
        "target": "reference",
        "target_amplitude": 1.0,
        "w_track": 0.5,
        "w_enstrophy": 0.5,
        "w_control": 0.5,
        "w_terminal": 0.5,
    },
    "optimizer": {
        "method": "lbfgs",
        "memory": 5,
        "c1": 1e-4,
        "rho": 0.5,
        "max_backtracks": 40,
        "grad_tol": 1e-6,
        "grad_atol": 1e-12,
        "max_iters": 100,
        "initial_step": 1.0,
    },
    "assimilation": {"noise_level": 0.0, "w_track": 0.5, "w_enstrophy": 0.0, "w_init": 1e-4, "w_terminal": 0.5},
    "run": {
        "T": 0.25,
        "dt": 1e-3,
        "initial": "random",
        "amplitude": 1.0,
        "decay_exponent": 2.0,
        "seed": CBF_DEFAULT_SEED,
        "checkpoint_stride": CBF_CHECKPOINT_STRIDE,
    },
    "verify": {"n": 16, "samples": 3, "require_global": False},
    "output": {"dir": "out"},
}

CHOICES = {
    ("grid", "dealias"): ("auto", DealiasRule.TWO_THIRDS.value, DealiasRule.ONE_HALF.value),
    ("forcing", "kind"): ("zero", "random", "shear"),
    ("control", "kind"): ("identity", "low_pass", "box"),
    ("cost", "target"): ("zero", "shear", "reference"),
    ("optimizer", "method"): tuple(m.value for m in OptimMethod),
    ("run", "initial"): ("random", "decay_mode", "zero"),
}


@dataclass
class RunConfig:
    sections: Dict[str, Dict[str, Any]] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, doc):
        diagnostics: List[str] = []
        sections = copy.deepcopy(DEFAULTS)
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise ConfigError(["run document must be a mapping of sections"])
        for name, values in doc.items():
            if name not in DEFAULTS:
                diagnostics.append(f"unknown section '{name}'")
                continue
            if values is None:
                continue
            if not isinstance(values, dict):
                diagnostics.append(f"section '{name}' must be a mapping")
                continue
            for key, value in values.items():
                if key not in DEFAULTS[name]:
                    diagnostics.append(f"unknown key '{name}.{key}'")
                else:
                    sections[name][key] = value
        cfg = cls(sections)
        diagnostics.extend(cfg.diagnose())
        if diagnostics:
            raise ConfigError(diagnostics)
        return cfg

    @classmethod
    def from_yaml(cls, path):
        try:
            with open(path, "r") as fh:
                doc = yaml.safe_load(fh)
        except OSError as e:
            raise ConfigError([f"cannot read {path}: {e}"])
        except yaml.YAMLError as e:
            raise ConfigError([f"{path} is not valid YAML: {e}"])
        return cls.from_dict(doc)

    def __getitem__(self, section):
        return self.sections[section]

    def override(self, section, key, value):
        """Apply a command-line override and re-validate."""
        self.sections[section][key] = value
        diagnostics = self.diagnose()
        if diagnostics:
            raise ConfigError(diagnostics)
        return self

    def diagnose(self) -> List[str]:
        """Every schema and physics violation of the document."""
        out = []
        for (section, key), allowed in CHOICES.items():
            if self.sections[section][key] not in allowed:
                out.append(f"{section}.{key} must be one of {list(allowed)}, got {self.sections[section][key]!r}")
        for builder in (self.grid, self.params, self.optimizer):
            try:
                builder()
            except (CbfError, TypeError, ValueError) as e:
                out.append(str(e))
        run = self.sections["run"]
        try:
            if step_count(float(run["T"]), float(run["dt"])) is None:
                out.append(f"run.T = {run['T']} must be a positive integer multiple of run.dt = {run['dt']}")
        except (TypeError, ValueError):
            out.append("run.T and run.dt must be numbers")
        if not isinstance(run["checkpoint_stride"], int) or run["checkpoint_stride"] < 1:
            out.append("run.checkpoint_stride must be a positive integer")
        weights = [("cost", k) for k in ("w_track", "w_enstrophy", "w_control", "w_terminal")]
        weights += [("assimilation", k) for k in ("noise_level", "w_track", "w_enstrophy", "w_init", "w_terminal")]
        for section, key in weights:
            value = self.sections[section][key]
            if not isinstance(value, (int, float)) or value < 0:
                out.append(f"{section}.{key} must be a non-negative number, got {value!r}")
        if self.sections["verify"]["require_global"]:
            p = self.sections["params"]
            try:
                if not CbfParams(**p).critical_monotone:
                    out.append("verify.require_global needs r = 3 and 2*beta*mu >= 1")
            except (CbfError, TypeError):
                pass
        return out

    # -- builders ---------------------------------------------------------------

    def params(self) -> CbfParams:
        p = self.sections["params"]
        return CbfParams(mu=float(p["mu"]), alpha=float(p["alpha"]), beta=float(p["beta"]), r=p["r"])

    def grid(self) -> GridSpec:
        g = self.sections["grid"]
        if g["dealias"] == "auto":
            return GridSpec.for_exponent(g["n"], self.sections["params"]["r"], float(g["length"]))
        return GridSpec(n=g["n"], length=float(g["length"]), dealias_rule=g["dealias"])

    def optimizer(self) -> OptimizerConfig:
        o = dict(self.sections["optimizer"])
        return OptimizerConfig(seed=self.seed, **o)

    @property
    def seed(self):
        return int(self.sections["run"]["seed"])

    @property
    def T(self):
        return float(self.sections["run"]["T"])

    @property
    def dt(self):
        return float(self.sections["run"]["dt"])

    @property
    def output_dir(self):
        return self.sections["output"]["dir"]
