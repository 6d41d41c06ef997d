import pytest

from models.grid import DealiasRule
from models.run_config import RunConfig
from utils.exceptions import ConfigError


def test_defaults_are_valid():
    cfg = RunConfig.from_dict({})
    assert cfg.params().r == 3
    assert cfg.grid().dealias_rule is DealiasRule.ONE_HALF
    assert cfg.T == 0.25 and cfg.dt == 1e-3


def test_every_problem_is_reported():
    doc = {
        "params": {"mu": -1.0, "gamma": 2},
        "grid": {"n": 7},
        "run": {"T": 0.25, "dt": 0.003},
        "control": {"kind": "everywhere"},
        "plots": {},
    }
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(doc)
    text = "\n".join(err.value.diagnostics)
    assert "unknown section 'plots'" in text
    assert "unknown key 'params.gamma'" in text
    assert "mu must be positive" in text
    assert "grid size must be an even integer" in text
    assert "multiple of run.dt" in text
    assert "control.kind" in text


def test_global_check_needs_critical_regime():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"verify": {"require_global": True}, "params": {"mu": 0.1, "beta": 1.0}})
    cfg = RunConfig.from_dict({"verify": {"require_global": True}, "params": {"mu": 1.0, "beta": 1.0, "r": 3}})
    assert cfg.params().critical_monotone


def test_yaml_loading(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("grid:\n  n: 16\nparams:\n  r: 1\noptimizer:\n  method: nonlinear_cg\n")
    cfg = RunConfig.from_yaml(path)
    assert cfg.grid().dealias_rule is DealiasRule.TWO_THIRDS
    assert cfg.optimizer().method.value == "nonlinear_cg"


def test_bad_yaml_and_missing_file(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: [unclosed\n")
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(bad)
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(tmp_path / "missing.yaml")


def test_override_revalidates():
    cfg = RunConfig.from_dict({})
    cfg.override("run", "seed", 7)
    assert cfg.seed == 7
    assert cfg.optimizer().seed == 7
    with pytest.raises(ConfigError):
        cfg.override("run", "dt", 0.003)
