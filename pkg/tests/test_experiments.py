import csv
import json

import numpy as np
import pytest

from cliqueopt import kinematics as kin
from cliqueopt.experiments import (
    CONVERGENCE_COLUMNS,
    SLOPE_COLUMNS,
    SWEEP_COLUMNS,
    ConfigError,
    ConvergenceConfig,
    EnergySweepConfig,
    ExperimentReport,
    builtin_trials,
    config_hash,
    emit_report,
    fit_loglog,
    generate_trials,
    load_report,
    load_trials,
    local_trajectory,
    reach_problem,
    run_convergence,
    run_energy_sweep,
    test_trajectory as sine_trajectory,
    trajectory_energy,
)
from cliqueopt.trajectory import Trajectory

SMALL_CONV = dict(chain="builtin:planar_two_link", n_dt=4, n_times=3, dt_max=0.01, dt_min=0.002)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ---------------------------------------------------------


def test_convergence_defaults():
    cfg = ConvergenceConfig()
    grid = cfg.dt_grid
    assert len(grid) == 20 and grid[0] == pytest.approx(0.15) and grid[-1] == pytest.approx(0.001)
    assert np.all(np.diff(grid) < 0)
    np.testing.assert_allclose(np.diff(np.log(grid)), np.log(grid[1] / grid[0]))
    np.testing.assert_allclose(cfg.times, np.linspace(0, 1, 20))


@pytest.mark.parametrize(
    "bad",
    [{"orders": [3]}, {"orders": []}, {"n_dt": 2}, {"dt_min": 0.2}, {"n_times": 0}, {"task_map": "cubic"}, {"nonsense": 1}],
)
def test_convergence_config_errors(bad):
    with pytest.raises(ConfigError):
        ConvergenceConfig.from_dict(bad)


@pytest.mark.parametrize(
    "bad",
    [{"weights": [1.0, 2.0]}, {"weights": [0.0, -1.0]}, {"formulations": ["cholesky"]},
     {"formulations": ["exact", "magic"]}, {"T": 2}, {"solver": {"bogus": 1}}, {"extra": 0}],
)
def test_sweep_config_errors(bad):
    with pytest.raises((ConfigError, ValueError)):
        EnergySweepConfig.from_dict(bad)


def test_sweep_defaults():
    cfg = EnergySweepConfig()
    assert cfg.weights[0] == 0.0
    np.testing.assert_allclose(cfg.weights[1:], np.geomspace(1, 500, 6))
    assert cfg.n_trials == 12


def test_config_hash_is_stable():
    assert config_hash(ConvergenceConfig()) == config_hash(ConvergenceConfig())
    assert config_hash(ConvergenceConfig()) != config_hash(ConvergenceConfig(n_dt=5))


# -- test trajectory and fitting -------------------------------------------


def test_sine_trajectory_parameters():
    d = 8
    t = np.array([0.5])
    q = sine_trajectory(t, d)
    eta = np.linspace(0, np.pi, d)
    np.testing.assert_allclose(q[0], np.pi / 2 * np.sin(eta), atol=1e-15)
    q1 = sine_trajectory(np.array([0.75]), d)[0]
    sigma = np.linspace(0.5, 2.0, d)
    np.testing.assert_allclose(q1, np.pi / 2 * np.sin(2 * np.pi * sigma * 0.25 + eta))


def test_local_trajectory_is_centred():
    for k in (1, 2):
        traj, c = local_trajectory(0.3, 0.01, k, 3)
        np.testing.assert_allclose(traj.configs()[c], sine_trajectory(np.array(0.3), 3), atol=1e-15)
        assert traj.T == c + k


def test_fit_loglog():
    x = np.geomspace(0.1, 0.001, 10)
    slope, intercept, r2, n = fit_loglog(x, 3.0 * x**2)
    assert slope == pytest.approx(2.0) and intercept == pytest.approx(np.log(3.0))
    assert r2 == pytest.approx(1.0) and n == 10
    assert fit_loglog(x, 1e-12 * np.ones(10)) == (None, None, None, 0)
    # points under the floor are dropped from the fit
    y = x**4
    slope, _, _, n = fit_loglog(x, y)
    assert n == int(np.sum(y > 1e-10)) and slope == pytest.approx(4.0)


# -- convergence experiment ------------------------------------------------


def test_affine_convergence_skips_fit():
    rep = run_convergence(ConvergenceConfig(task_map="affine", **SMALL_CONV))
    assert all(r["mean_err"] < 1e-8 for r in rep.rows)
    assert all(s["slope"] is None for s in rep.summary["slopes"])


def test_convergence_report_files(tmp_path):
    cfg = ConvergenceConfig(**SMALL_CONV)
    rep = run_convergence(cfg)
    assert len(rep.rows) == cfg.n_dt * len(cfg.orders)
    assert all(r["std_err"] >= 0 for r in rep.rows)
    slopes = {s["k"]: s["slope"] for s in rep.summary["slopes"]}
    assert slopes[1] == pytest.approx(2.0, abs=0.3)
    assert slopes[2] == pytest.approx(4.0, abs=0.3)
    written = emit_report(rep, "csv", tmp_path / "conv.csv")
    assert [p.name for p in written] == ["conv.csv", "conv_slopes.csv"]
    rows = read_csv(tmp_path / "conv.csv")
    assert tuple(rows[0]) == CONVERGENCE_COLUMNS and len(rows) == 1 + len(rep.rows)
    srows = read_csv(tmp_path / "conv_slopes.csv")
    assert tuple(srows[0]) == SLOPE_COLUMNS and len(srows) == 3
    emit_report(rep, "json", tmp_path / "conv.json")
    back = load_report(tmp_path / "conv.json")
    assert back == ExperimentReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back.rows == rep.rows and back.summary == rep.summary
    assert back.metadata["config_hash"] == config_hash(cfg)


def test_convergence_is_reproducible():
    a = run_convergence(ConvergenceConfig(**SMALL_CONV)).to_dict()
    b = run_convergence(ConvergenceConfig(**SMALL_CONV)).to_dict()
    assert json.dumps(a) == json.dumps(b)


def test_empty_report_csv(tmp_path):
    emit_report(ExperimentReport("energy-sweep", []), "csv", tmp_path / "e.csv")
    assert read_csv(tmp_path / "e.csv") == [list(SWEEP_COLUMNS)]
    with pytest.raises(ValueError):
        emit_report(ExperimentReport("energy-sweep", []), "xml", tmp_path / "e.xml")


def test_emit_reports_path_on_failure(tmp_path):
    with pytest.raises(OSError, match="missing"):
        emit_report(ExperimentReport("energy-sweep", []), "csv", tmp_path / "missing" / "e.csv")


# -- trials and energy sweep -----------------------------------------------


def test_builtin_trials_are_versioned_and_reproducible():
    trials = builtin_trials()
    assert len(trials) == 12
    chain = kin.desk_arm()
    regenerated = generate_trials(chain, 12, 20240611)
    for a, b in zip(trials, regenerated):
        np.testing.assert_allclose(a["q_start"], b["q_start"], atol=1e-12)
        np.testing.assert_allclose(a["goal"], b["goal"], atol=1e-12)


def test_load_trials_sources(tmp_path):
    chain = kin.desk_arm()
    assert load_trials(EnergySweepConfig(), chain) == builtin_trials()
    seeded = load_trials(EnergySweepConfig(seed=3, n_trials=2), chain)
    assert seeded == generate_trials(chain, 2, 3)
    path = tmp_path / "trials.json"
    path.write_text(json.dumps({"trials": seeded}))
    assert load_trials(EnergySweepConfig(trials=str(path)), chain) == seeded
    with pytest.raises(ConfigError):
        load_trials(EnergySweepConfig(trials=[{"q_start": [0.0], "goal": [0, 0, 0]}]), chain)
    with pytest.raises(ConfigError):
        load_trials(EnergySweepConfig(trials=[]), chain)


def test_reach_problem_terms():
    chain = kin.desk_arm()
    trial = builtin_trials()[0]
    p0 = reach_problem(chain, trial["q_start"], trial["goal"], 10, 0.05)
    p1 = reach_problem(chain, trial["q_start"], trial["goal"], 10, 0.05, 5.0)
    assert len(p1.terms) == len(p0.terms) + 1
    assert len(p0.constraints) == 1 and p0.constraints[0].kind == "eq"


def test_trajectory_energy_of_still_trajectory():
    chain = kin.desk_arm()
    assert trajectory_energy(chain, Trajectory.zero_motion(np.zeros(chain.dof), 5, 0.05)) == 0.0


def small_sweep(**kw):
    chain = kin.three_joint_arm()
    trials = generate_trials(chain, 2, 7)
    cfg = dict(chain="builtin:three_joint_arm", trials=trials, weights=[0.0, 1.0, 10.0], T=8, dt=0.05)
    cfg.update(kw)
    return EnergySweepConfig.from_dict(cfg)


def test_small_energy_sweep(tmp_path):
    cfg = small_sweep()
    rep = run_energy_sweep(cfg)
    exact = [r for r in rep.rows if r["formulation"] == "exact"]
    assert [r["weight_normalized"] for r in exact] == [0.0, 0.1, 1.0]
    assert exact[0]["mean_energy"] == pytest.approx(1.0)
    assert exact[-1]["mean_energy"] == pytest.approx(0.0, abs=1e-12)
    chol = [r for r in rep.rows if r["formulation"] == "cholesky"]
    assert len(chol) == 6 and {r["trimmed_flag"] for r in chol} == {False, True}
    assert set(rep.summary["trial_success"]) == {"exact", "cholesky"}
    assert len(rep.summary["trial_success"]["cholesky"]) == 2
    # normalization uses each trial's own anchors
    for i in range(2):
        cells = [c for c in rep.summary["cells"] if c["trial"] == i and c["formulation"] == "exact"]
        assert cells[0]["normalized"] == 1.0 and cells[-1]["normalized"] == 0.0
    emit_report(rep, "csv", tmp_path / "sweep.csv")
    rows = read_csv(tmp_path / "sweep.csv")
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 1 + len(rep.rows)
    emit_report(rep, "json", tmp_path / "sweep.json")
    assert load_report(tmp_path / "sweep.json").rows == rep.rows


def test_sweep_needs_bodies():
    with pytest.raises(ConfigError):
        run_energy_sweep(small_sweep(chain="builtin:planar_two_link"))
