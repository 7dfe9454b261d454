"""JSON problem descriptions for the ``optimize`` command.

Schema (version 1)::

    {
      "version": 1,
      "chain": "builtin:desk_arm" | "<path to chain JSON>",
      "T": 20, "dt": 0.05,
      "q_start": [...],                      # length dof; defaults to zeros
      "terms": [
        {"type": "config_penalty", "alpha1": 0.0, "alpha2": 0.01},
        {"type": "posture", "weight": 0.01, "q_default": [...]},
        {"type": "kinetic_energy", "weight": 10, "formulation": "exact"},
        {"type": "task_derivative", "k": 1, "weight": 1.0, "frame": "ee"},
        {"type": "boundary_velocity", "weight": 0.1},
        {"type": "joint_limit_penalty", "weight": 1.0, "margin": 0.05}
      ],
      "constraints": [
        {"type": "goal", "goal": [x, y, z], "frame": "ee", "curvature": "full"},
        {"type": "obstacle", "center": [...], "radius": 0.1, "margin": 0.02, "frame": "ee"},
        {"type": "joint_limits"}
      ],
      "optimizer": {"tol_c": 1e-6, ...}
    }

Relative chain paths resolve against the problem file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kinematics as kin
from .experiments import ConfigError
from .objective import (
    IdentityMap,
    PointMap,
    SquaredDerivativeTerm,
    config_penalty_terms,
    joint_limit_penalty,
    kinetic_energy_term,
    posture_term,
)
from .optimizer import (
    Problem,
    SolverConfig,
    goal_constraint,
    joint_limit_constraints,
    obstacle_constraint,
)
from .trajectory import Trajectory

PROBLEM_FILE_VERSION = 1


@dataclass
class ProblemSpec:
    chain: kin.KinematicChain
    problem: Problem
    init: Trajectory
    solver: SolverConfig


def _require(d, key, where):
    if key not in d:
        raise ConfigError(f"{where}: missing {key!r}")
    return d[key]


def _build_term(t: dict, chain, T, dt):
    kind = _require(t, "type", "term")
    d = chain.dof
    if kind == "config_penalty":
        return config_penalty_terms(t.get("alpha1", 0.0), t.get("alpha2", 0.0), dt, d)
    if kind == "posture":
        q_default = t.get("q_default")
        if q_default is None:
            q_default = np.zeros(d)
        return [posture_term(q_default, t.get("weight", 1.0))]
    if kind == "kinetic_energy":
        return [kinetic_energy_term(chain, _require(t, "weight", "kinetic_energy"), dt, t.get("formulation", "exact"))]
    if kind == "task_derivative":
        phi = PointMap(chain, t.get("frame", "ee"))
        return [SquaredDerivativeTerm(phi, int(t.get("k", 1)), t.get("weight", 1.0), dt)]
    if kind == "boundary_velocity":
        ident = IdentityMap(d)
        w = t.get("weight", 0.1)
        return [SquaredDerivativeTerm(ident, 1, w, dt, integrated=False, times=[where]) for where in (1, -1)]
    if kind == "joint_limit_penalty":
        lo, hi = chain.limits
        return [joint_limit_penalty(lo, hi, t.get("margin", 0.0), t.get("weight", 1.0))]
    raise ConfigError(f"unknown term type {kind!r}")


def _build_constraint(c: dict, chain):
    kind = _require(c, "type", "constraint")
    frame = c.get("frame", "ee")
    if kind == "goal":
        return [goal_constraint(chain, _require(c, "goal", "goal"), frame, curvature=c.get("curvature", "gauss-newton"))]
    if kind == "obstacle":
        return [obstacle_constraint(chain, _require(c, "center", "obstacle"), _require(c, "radius", "obstacle"),
                                    c.get("margin", 0.0), frame, c.get("times"))]
    if kind == "joint_limits":
        lo, hi = chain.limits
        return joint_limit_constraints(lo, hi, c.get("times"))
    raise ConfigError(f"unknown constraint type {kind!r}")


def problem_from_dict(data: dict, base_dir=".") -> ProblemSpec:
    version = data.get("version", PROBLEM_FILE_VERSION)
    if version != PROBLEM_FILE_VERSION:
        raise ConfigError(f"unsupported problem file version {version}")
    chain_ref = str(_require(data, "chain", "problem"))
    if not chain_ref.startswith("builtin:"):
        chain_ref = str(Path(base_dir) / chain_ref)
    try:
        chain = kin.get_chain(chain_ref)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load chain {chain_ref!r}: {exc}") from exc
    T = int(_require(data, "T", "problem"))
    dt = float(_require(data, "dt", "problem"))
    if T < 1 or dt <= 0:
        raise ConfigError("need T >= 1 and dt > 0")
    q_start = np.asarray(data.get("q_start", np.zeros(chain.dof)), dtype=float)
    if q_start.shape != (chain.dof,):
        raise ConfigError(f"q_start must have {chain.dof} entries")
    try:
        terms = [term for t in data.get("terms", []) for term in _build_term(t, chain, T, dt)]
        constraints = [c for spec in data.get("constraints", []) for c in _build_constraint(spec, chain)]
        solver = SolverConfig.from_dict(data.get("optimizer", {}))
    except (TypeError, KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed problem description: {exc}") from exc
    if not terms:
        raise ConfigError("problem has no objective terms")
    return ProblemSpec(chain, Problem(terms, constraints), Trajectory.zero_motion(q_start, T, dt), solver)


def load_problem(path) -> ProblemSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return problem_from_dict(data, path.parent)
