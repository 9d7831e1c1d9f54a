import json
import math

import numpy as np
import pytest

from stablemip import experiments as ex
from stablemip.densities import WrappedGaussian
from stablemip.error_metrics import read_records
from stablemip.errors import ValidationError
from stablemip.particle_system import constant_drift
from stablemip.scenarios import SCENARIOS, ScenarioSpec, register

SMALL = dict(n_list=(256, 512), replications=2, t_end=0.05, snapshot_times=(0.025, 0.05), seed=4)


@pytest.fixture
def extra_scenarios():
    added = []

    def add(spec):
        register(spec)
        added.append(spec.name)
        return spec

    yield add
    for name in added:
        SCENARIOS.pop(name, None)


def test_smoke_shape_and_outputs(tmp_path):
    cfg = ex.ExperimentConfig(out_dir=str(tmp_path), **SMALL)
    res = ex.run_convergence(cfg)
    assert len(res.records) == 2 * 2 * 2
    assert {(r.N, r.rep) for r in res.records} == {(256, 0), (256, 1), (512, 0), (512, 1)}
    assert (tmp_path / "density_sup.csv").exists()
    summary = json.loads((tmp_path / "summary_convergence.json").read_text())
    assert summary["config"]["n_list"] == [256, 512] and "git" in summary
    timing = json.loads((tmp_path / "timing_convergence.json").read_text())
    assert timing["512"]["mean_neighbors"] > 0


def test_same_seed_same_bytes(tmp_path):
    blobs = []
    for k in range(2):
        out = tmp_path / str(k)
        ex.run_convergence(ex.ExperimentConfig(out_dir=str(out), **SMALL))
        blobs.append((out / "density_sup.csv").read_bytes())
        blobs.append((out / "summary_convergence.json").read_bytes())
    assert blobs[0] == blobs[2] and blobs[1] == blobs[3]


def test_zero_drift_density_error_decreases():
    cfg = ex.ExperimentConfig(scenario="zero_drift", n_list=(256, 1024, 4096), replications=4, t_end=0.1,
                              snapshot_times=(0.1,), seed=8)
    res = ex.run_convergence(cfg)
    norms = [res.norms[(N, 0.1, 2)][0] for N in cfg.n_list]
    assert norms[0] > norms[1] > norms[2]
    assert res.fits[(0.1, 2)].slope < 0


def test_pathwise_zero_and_constant_drift(extra_scenarios):
    extra_scenarios(ScenarioSpec("constant_test", lambda L, d: constant_drift(0.3, d),
                                 lambda L: WrappedGaussian(L / 2, 1.0, L), math.inf, 0.99))
    for name in ("zero_drift", "constant_test"):
        cfg = ex.ExperimentConfig(scenario=name, n_list=(64, 128, 256), replications=3, t_end=0.05,
                                  snapshot_times=(0.05,))
        res = ex.run_pathwise(cfg)
        assert all(r.value == 0.0 for r in res.records) and len(res.records) == 9


def test_pathwise_hypothesis_check(extra_scenarios):
    extra_scenarios(ScenarioSpec("rough_test", lambda L, d: constant_drift(0.3, d),
                                 lambda L: WrappedGaussian(L / 2, 1.0, L), math.inf, 0.2))
    cfg = ex.ExperimentConfig(scenario="rough_test", **SMALL)
    with pytest.raises(ValidationError, match="beta > 1 - alpha/2"):
        ex.run_pathwise(cfg)


def test_weak_guards_and_zero_drift_control():
    with pytest.raises(ValidationError, match="1000"):
        ex.run_weak(ex.ExperimentConfig(**SMALL))
    cfg = ex.ExperimentConfig(scenario="zero_drift", n_list=(32, 64), replications=1000, dt=0.05, t_end=0.5,
                              snapshot_times=(0.5,), seed=2)
    res = ex.run_weak(cfg)
    for est in res.estimates.values():
        assert est.n_samples == 1000 and est.value <= 3 * est.bootstrap_se + 1e-12
    assert [r.rep for r in res.records] == [-1, -1]


def test_cross_alpha_guards_and_determinism(tmp_path):
    with pytest.raises(ValidationError):
        ex.run_cross_alpha(ex.ExperimentConfig(**SMALL))
    with pytest.raises(ValidationError):
        ex.run_cross_alpha(ex.ExperimentConfig(**{**SMALL, "alpha": [1.5, 1.8]}))
    cfg = {**SMALL, "alpha": [1.5, 2.0], "n_list": (128, 256, 512)}
    a = ex.run_cross_alpha(ex.ExperimentConfig(out_dir=str(tmp_path / "a"), **cfg))
    b = ex.run_cross_alpha(ex.ExperimentConfig(out_dir=str(tmp_path / "b"), **cfg))
    assert a.slopes == b.slopes and set(a.slopes) == {1.5, 2.0}
    assert (tmp_path / "a" / "summary_cross_alpha.json").read_bytes() == \
        (tmp_path / "b" / "summary_cross_alpha.json").read_bytes()
    assert read_records(tmp_path / "a" / "alpha_2" / "density_sup.csv")


def test_thread_budget_does_not_change_results():
    a = ex.run_convergence(ex.ExperimentConfig(threads=1, **SMALL))
    b = ex.run_convergence(ex.ExperimentConfig(threads=3, **SMALL))
    assert a.records == b.records


def test_config_validation_and_files(tmp_path):
    bad = [dict(theta=0.5), dict(theta=0.0), dict(n_list=(512, 256)), dict(replications=0), dict(alpha=1.0),
           dict(scenario="nope"), dict(dt=3e-4), dict(snapshot_times=(0.9,)), dict(alpha=[1.5, 2.0])]
    for kw in bad:
        with pytest.raises(ValidationError):
            ex.ExperimentConfig(**{**SMALL, **kw}).validate()
    with pytest.raises(ValidationError, match="unknown config keys"):
        ex.ExperimentConfig.from_mapping({"scenario": "zero_drift", "colour": 1})
    (tmp_path / "c.yaml").write_text("scenario: zero_drift\nalpha: 1.8\nn_list: [64, 128, 256]\nseed: 3\n")
    cfg = ex.ExperimentConfig.from_file(tmp_path / "c.yaml", seed=9)
    assert cfg.scenario == "zero_drift" and cfg.alpha == 1.8 and cfg.n_list == (64, 128, 256) and cfg.seed == 9
    (tmp_path / "c.json").write_text(json.dumps({"m": [1, 3], "kernel_radius": 0.5}))
    cfg = ex.ExperimentConfig.from_file(tmp_path / "c.json")
    assert cfg.m == (1, 3) and cfg.kernel_radius == 0.5
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ValidationError):
        ex.ExperimentConfig.from_file(tmp_path / "list.yaml")


def test_kernel_check_passes():
    rep = ex.kernel_check(ex.ExperimentConfig(**SMALL), n_samples=50_000)
    assert rep["passed"], rep["checks"]


def test_boundary_mass_and_mean_neighbors():
    from stablemip.mollifier import ParticleEnsemble
    from stablemip.stable_noise import GridField

    g = GridField(20.0, 64)
    f = g.with_values(np.full(64, 1 / 20.0))
    assert ex.boundary_mass(f) == pytest.approx(0.5)
    ens = ParticleEnsemble(np.array([[0.3], [0.8], [19.9], [10.0]]), 20.0)
    # pairs within 0.6: (0.3, 0.8) and (0.3, 19.9) across the seam
    assert ex.mean_neighbors(ens, 0.6) == pytest.approx(4 / 4)
