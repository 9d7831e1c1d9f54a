import json
import subprocess
import sys

import numpy as np
import pytest

from stablemip import cli
from stablemip.densities import WrappedGaussian
from stablemip.particle_system import DriftSpec
from stablemip.scenarios import SCENARIOS, ScenarioSpec, register

SMALL_YAML = """scenario: fractional_burgers
alpha: 1.5
theta: 0.25
m: [1, 2]
n_list: [128, 256, 512]
replications: 2
dt: 0.001
dt_pde: 0.00025
t_end: 0.05
snapshot_times: [0.05]
grid_n: 1024
domain_length: 20.0
seed: 11
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(SMALL_YAML)
    return p


def test_convergence_and_pathwise(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    assert cli.main(["convergence", "--config", str(config_file), "--out-dir", str(out)]) == 0
    assert "slope" in capsys.readouterr().out
    assert cli.main(["pathwise", "--config", str(config_file), "--out-dir", str(out), "--threads", "2"]) == 0
    for name in ("density_sup.csv", "pathwise.csv", "summary_convergence.json", "summary_pathwise.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary_pathwise.json").read_text())
    assert summary["config"]["seed"] == 11


def test_seed_and_scenario_flags(tmp_path, config_file):
    out = tmp_path / "o"
    assert cli.main(["convergence", "--config", str(config_file), "--out-dir", str(out), "--seed", "99",
                     "--scenario", "zero_drift"]) == 0
    text = (out / "density_sup.csv").read_text().splitlines()
    assert text[1].startswith("zero_drift,") and text[1].endswith(",99")


def test_cross_alpha_cli(tmp_path, config_file, capsys):
    cfg = tmp_path / "x.yaml"
    cfg.write_text(SMALL_YAML.replace("alpha: 1.5", "alpha: [1.5, 2.0]"))
    assert cli.main(["cross-alpha", "--config", str(cfg), "--out-dir", str(tmp_path / "x")]) == 0
    assert "max slope difference" in capsys.readouterr().out


def test_validation_exit_code(tmp_path, config_file, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL_YAML.replace("theta: 0.25", "theta: 0.75"))
    assert cli.main(["convergence", "--config", str(bad)]) == 2
    assert "theta" in capsys.readouterr().err
    assert cli.main(["weak", "--config", str(config_file)]) == 2
    assert cli.main(["convergence", "--scenario", "nope"]) == 2


def test_numerical_abort_exit_code(config_file):
    # bounded and Lipschitz on the spot-check range u <= 5 but not beyond it
    lying = DriftSpec(lambda t, x, u: 0.01 * np.minimum(u, 100.0)[:, None], kappa=0.05, beta=1.0, lip_u=0.01,
                      name="lying")
    register(ScenarioSpec("lying_test", lambda L, d: lying, lambda L: WrappedGaussian(10.0, 0.05, L), 1e9, 0.99))
    try:
        assert cli.main(["convergence", "--config", str(config_file), "--scenario", "lying_test"]) == 3
    finally:
        SCENARIOS.pop("lying_test")


def test_kernel_check_and_module_entry(tmp_path):
    assert cli.main(["kernel-check", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "kernel_check.json").read_text())["passed"]
    proc = subprocess.run([sys.executable, "-m", "stablemip", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("convergence", "pathwise", "weak", "cross-alpha", "kernel-check"):
        assert sub in proc.stdout
