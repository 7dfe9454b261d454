"""Hessian convergence and kinetic-energy sweep experiments with CSV/JSON reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import kinematics as kin
from .cholesky_metric import NotPositiveDefiniteError
from .objective import (
    AffineMap,
    PointMap,
    SquaredDerivativeTerm,
    IdentityMap,
    config_penalty_terms,
    full_hessian_fd,
    kinetic_energy_term,
    objective_value,
    posture_term,
)
from .optimizer import Problem, SolverConfig, augmented_lagrangian_solve, goal_constraint
from .trajectory import Trajectory

log = logging.getLogger(__name__)

ERR_FLOOR = 1e-10
CONVERGENCE_COLUMNS = ("k", "dt", "mean_err", "std_err")
SLOPE_COLUMNS = ("k", "slope", "intercept", "r2", "n_points")
SWEEP_COLUMNS = ("formulation", "weight_normalized", "mean_energy", "std_energy", "n_trials", "trimmed_flag")


class ConfigError(ValueError):
    """Invalid experiment or problem configuration."""


def _from_dict(cls, data: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    return cls(**data)


def config_hash(config) -> str:
    blob = json.dumps(asdict(config), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- Hessian convergence ---------------------------------------------------


@dataclass
class ConvergenceConfig:
    chain: str = "builtin:desk_arm"
    orders: tuple = (1, 2)
    dt_max: float = 0.15
    dt_min: float = 0.001
    n_dt: int = 20
    n_times: int = 20
    amplitude: float = np.pi / 2
    sigma_range: tuple = (0.5, 2.0)
    eta_range: tuple = (0.0, np.pi)
    frame: str = "ee"
    # "fk" uses the chain point; "affine" swaps in a fixed linear map
    task_map: str = "fk"
    method: str = "complex"

    def __post_init__(self):
        self.orders = tuple(int(k) for k in self.orders)
        self.sigma_range = tuple(self.sigma_range)
        self.eta_range = tuple(self.eta_range)
        if not self.orders or any(k not in (1, 2) for k in self.orders):
            raise ConfigError("orders must be a nonempty subset of {1, 2}")
        if self.n_dt < 3:
            raise ConfigError("need at least 3 dt values for a slope fit")
        if not 0 < self.dt_min < self.dt_max:
            raise ConfigError("need 0 < dt_min < dt_max")
        if self.n_times < 1:
            raise ConfigError("n_times must be positive")
        if self.task_map not in ("fk", "affine"):
            raise ConfigError(f"unknown task map {self.task_map!r}")

    @property
    def dt_grid(self) -> np.ndarray:
        return np.geomspace(self.dt_max, self.dt_min, self.n_dt)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_times)

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceConfig":
        return _from_dict(cls, data)


def test_trajectory(t, d: int, amplitude=np.pi / 2, sigma_range=(0.5, 2.0), eta_range=(0.0, np.pi)) -> np.ndarray:
    """``q_i(t) = A sin(2 pi sigma_i (t - 1/2) + eta_i)``, shape ``t.shape + (d,)``."""
    sigma = np.linspace(*sigma_range, d)
    eta = np.linspace(*eta_range, d)
    t = np.asarray(t, dtype=float)[..., None]
    return amplitude * np.sin(2 * np.pi * sigma * (t - 0.5) + eta)
test_trajectory.__test__ = False  # keep pytest from collecting it


def local_trajectory(s: float, dt: float, k: int, d: int, **traj_kw) -> tuple[Trajectory, int]:
    """Samples of the test trajectory around time ``s``.

    Returns the trajectory and the index ``c`` of the configuration at ``s``;
    every clique containing ``q_c`` lies inside it, so its Hessian block is
    the one of a long trajectory through ``s``.
    """
    c = k + 1
    T = c + k
    X = test_trajectory(s + (np.arange(T + 2) - c) * dt, d, **traj_kw)
    return Trajectory.from_configs(X, dt), c


def fit_loglog(x, y, floor=ERR_FLOOR):
    """OLS fit of ``log y`` against ``log x`` over points with ``y > floor``.

    Returns ``(slope, intercept, r2, n_points)``; slope and friends are None
    when fewer than 3 points survive.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = y > floor
    n = int(keep.sum())
    if n < 3:
        return None, None, None, n
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2), n


def _convergence_map(config: ConvergenceConfig, chain):
    if config.task_map == "affine":
        A = np.random.default_rng(0).standard_normal((3, chain.dof))
        return AffineMap(A)
    return PointMap(chain, config.frame)


def hessian_errors(config: ConvergenceConfig, k: int, dt: float, chain=None):
    """Normalized block errors at every sample time for one (k, dt) cell."""
    chain = chain or kin.get_chain(config.chain)
    phi = _convergence_map(config, chain)
    kw = dict(amplitude=config.amplitude, sigma_range=config.sigma_range, eta_range=config.eta_range)
    errs = []
    for s in config.times:
        traj, c = local_trajectory(s, dt, k, chain.dof, **kw)
        term = SquaredDerivativeTerm(phi, k, 1.0, dt)
        errs.append(full_hessian_fd([term], traj, c, method=config.method).err)
    return np.array(errs)


def run_convergence(config: ConvergenceConfig) -> "ExperimentReport":
    chain = kin.get_chain(config.chain)
    rows, slopes = [], []
    for k in config.orders:
        means = []
        for dt in config.dt_grid:
            e = hessian_errors(config, k, float(dt), chain)
            means.append(float(e.mean()))
            rows.append({"k": k, "dt": float(dt), "mean_err": float(e.mean()), "std_err": float(e.std())})
        slope, intercept, r2, n = fit_loglog(config.dt_grid, means)
        if slope is None:
            log.info("k=%d: fewer than 3 errors above %.0e, slope fit skipped", k, ERR_FLOOR)
        slopes.append({"k": k, "slope": slope, "intercept": intercept, "r2": r2, "n_points": n})
    return ExperimentReport("convergence", rows, {"slopes": slopes}, _metadata(config))


# -- kinetic energy sweep --------------------------------------------------


@dataclass
class EnergySweepConfig:
    chain: str = "builtin:desk_arm"
    weights: tuple = tuple([0.0] + list(np.geomspace(1.0, 500.0, 6)))
    formulations: tuple = ("exact", "cholesky")
    # "builtin" reads the versioned trial set; a path reads a JSON file
    trials: object = "builtin"
    n_trials: int = 12
    seed: int | None = None
    T: int = 20
    dt: float = 0.05
    accel_weight: float = 0.01
    posture_weight: float = 0.01
    boundary_weight: float = 0.1
    violation_tol: float = 1e-4
    goal_curvature: str = "full"
    solver: dict = field(default_factory=lambda: {"tol_c": 1e-4})

    def __post_init__(self):
        self.weights = tuple(float(w) for w in self.weights)
        self.formulations = tuple(self.formulations)
        if 0.0 not in self.weights:
            raise ConfigError("weight grid must contain 0 (the maximum-energy anchor)")
        if any(w < 0 for w in self.weights):
            raise ConfigError("weights must be nonnegative")
        if "exact" not in self.formulations:
            raise ConfigError("the exact formulation is needed for the minimum-energy anchor")
        if any(f not in ("exact", "cholesky") for f in self.formulations):
            raise ConfigError(f"unknown formulation in {self.formulations}")
        if self.T < 3 or self.dt <= 0:
            raise ConfigError("need T >= 3 and dt > 0")
        SolverConfig.from_dict(self.solver)

    @classmethod
    def from_dict(cls, data: dict) -> "EnergySweepConfig":
        return _from_dict(cls, data)


def generate_trials(chain: kin.KinematicChain, n: int, seed: int, frame="ee", spread=0.5) -> list[dict]:
    """Random start configurations with goals at the frame position of another random configuration."""
    rng = np.random.default_rng(seed)
    lo, hi = chain.limits
    out = []
    for _ in range(n):
        q0 = spread * rng.uniform(lo, hi)
        qg = spread * rng.uniform(lo, hi)
        goal = kin.point_position(chain, qg, chain.resolve_frame(frame))
        out.append({"q_start": q0.tolist(), "goal": goal.tolist()})
    return out


def builtin_trials() -> list[dict]:
    text = resources.files("cliqueopt").joinpath("data/trials.json").read_text()
    return json.loads(text)["trials"]


def load_trials(config: EnergySweepConfig, chain) -> list[dict]:
    if config.seed is not None:
        return generate_trials(chain, config.n_trials, config.seed)
    if config.trials == "builtin":
        trials = builtin_trials()
    elif isinstance(config.trials, (list, tuple)):
        trials = list(config.trials)
    else:
        trials = json.loads(Path(config.trials).read_text())["trials"]
    if not trials:
        raise ConfigError("trial set is empty")
    for tr in trials:
        if len(tr["q_start"]) != chain.dof or len(tr["goal"]) != 3:
            raise ConfigError("trial does not match the chain")
    return trials


def reach_problem(chain, q_start, goal, T, dt, energy_weight=0.0, formulation="exact",
                  accel_weight=0.01, posture_weight=0.01, boundary_weight=0.1, frame="ee",
                  goal_curvature="gauss-newton") -> Problem:
    """Goal-reaching problem with smoothness, posture and boundary velocity terms."""
    d = chain.dof
    q_start = np.asarray(q_start, dtype=float)
    terms = config_penalty_terms(0.0, accel_weight, dt, d)
    terms.append(posture_term(q_start, posture_weight))
    ident = IdentityMap(d)
    for where in (1, -1):
        terms.append(SquaredDerivativeTerm(ident, 1, boundary_weight, dt, integrated=False, times=[where]))
    if energy_weight > 0:
        terms.append(kinetic_energy_term(chain, energy_weight, dt, formulation))
    return Problem(terms, [goal_constraint(chain, goal, frame, curvature=goal_curvature)])


def trajectory_energy(chain, traj: Trajectory) -> float:
    """Discrete kinetic energy of the steps ``q_0 .. q_T`` (exact inertial map)."""
    term = kinetic_energy_term(chain, 1.0, traj.dt, "exact", times=range(1, traj.T + 1))
    return float(objective_value([term], traj))


def _solve_cell(chain, trial, weight, formulation, config: EnergySweepConfig):
    problem = reach_problem(
        chain, trial["q_start"], trial["goal"], config.T, config.dt, weight, formulation,
        config.accel_weight, config.posture_weight, config.boundary_weight,
        goal_curvature=config.goal_curvature,
    )
    init = Trajectory.zero_motion(trial["q_start"], config.T, config.dt)
    try:
        rep = augmented_lagrangian_solve(problem, init, SolverConfig.from_dict(config.solver))
    except (NotPositiveDefiniteError, np.linalg.LinAlgError) as exc:
        log.info("%s weight %g: %s", formulation, weight, exc)
        return {"energy": None, "termination": "solver-failure", "violation": None, "success": False}
    viol = rep.final_violation
    ok = rep.termination not in ("line-search-failure", "solver-failure") and viol <= config.violation_tol
    return {
        "energy": trajectory_energy(chain, rep.trajectory),
        "termination": rep.termination,
        "violation": float(viol),
        "success": bool(ok),
    }


def run_energy_sweep(config: EnergySweepConfig) -> "ExperimentReport":
    chain = kin.get_chain(config.chain)
    if not chain.bodies:
        raise ConfigError("energy sweep needs a chain with bodies")
    trials = load_trials(config, chain)
    weights = sorted(config.weights)
    w_max = weights[-1]
    cells = []
    for i, trial in enumerate(trials):
        base = _solve_cell(chain, trial, 0.0, "exact", config)
        for form in config.formulations:
            for w in weights:
                res = base if w == 0 else _solve_cell(chain, trial, w, form, config)
                cells.append({"trial": i, "formulation": form, "weight": w, **res})
    # per-trial anchors
    for i in range(len(trials)):
        mine = [c for c in cells if c["trial"] == i]
        e_max = next(c["energy"] for c in mine if c["weight"] == 0 and c["formulation"] == "exact")
        e_min = next(c["energy"] for c in mine if c["weight"] == w_max and c["formulation"] == "exact")
        span = e_max - e_min if e_max is not None and e_min is not None else None
        for c in mine:
            if c["energy"] is None or not span:
                c["normalized"] = None if c["energy"] is None else 0.0
            else:
                c["normalized"] = (c["energy"] - e_min) / span
    failed = {(c["trial"], c["formulation"]) for c in cells if not c["success"]}
    rows = []
    for form in config.formulations:
        variants = [False, True] if form == "cholesky" else [False]
        for trimmed in variants:
            for w in weights:
                vals = [
                    c["normalized"] for c in cells
                    if c["formulation"] == form and c["weight"] == w and c["normalized"] is not None
                    and not (trimmed and (c["trial"], form) in failed)
                ]
                rows.append({
                    "formulation": form,
                    "weight_normalized": w / w_max if w_max > 0 else 0.0,
                    "mean_energy": float(np.mean(vals)) if vals else None,
                    "std_energy": float(np.std(vals)) if vals else None,
                    "n_trials": len(vals),
                    "trimmed_flag": trimmed,
                })
    flags = {
        form: [not any((i, form) == f for f in failed) for i in range(len(trials))]
        for form in config.formulations
    }
    summary = {"weights": weights, "trial_success": flags, "cells": cells}
    return ExperimentReport("energy-sweep", rows, summary, _metadata(config))


# -- reports ---------------------------------------------------------------


def _metadata(config) -> dict:
    return {
        "config": json.loads(json.dumps(asdict(config), default=str)),
        "config_hash": config_hash(config),
        "versions": {
            "cliqueopt": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


@dataclass
class ExperimentReport:
    kind: str
    rows: list
    summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def columns(self) -> tuple:
        return CONVERGENCE_COLUMNS if self.kind == "convergence" else SWEEP_COLUMNS

    def to_dict(self) -> dict:
        return {"kind": self.kind, "columns": list(self.columns), "rows": self.rows,
                "summary": self.summary, "metadata": self.metadata}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(data["kind"], data["rows"], data.get("summary", {}), data.get("metadata", {}))


def _csv_value(v):
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def _write_csv(path: Path, columns, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_csv_value(r.get(c)) for c in columns])


def slopes_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_slopes" + (path.suffix or ".csv"))


def emit_report(report: ExperimentReport, fmt: str, path) -> list[Path]:
    """Write ``report`` as CSV or JSON and return the files written.

    Convergence CSV output also writes ``<stem>_slopes.csv`` next to ``path``.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    try:
        if fmt == "json":
            path.write_text(json.dumps(report.to_dict(), indent=2, allow_nan=False))
            return [path]
        _write_csv(path, report.columns, report.rows)
        written = [path]
        if report.kind == "convergence":
            sp = slopes_path(path)
            _write_csv(sp, SLOPE_COLUMNS, report.summary.get("slopes", []))
            written.append(sp)
        return written
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def load_report(path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text()))
